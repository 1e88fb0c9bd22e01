//! Frame encoding: one UTF-8 JSON object per line, LF terminator.

use super::{ToolError, WireFrame};

/// Encode a frame to its wire bytes.
pub fn encode_frame(frame: &WireFrame) -> Vec<u8> {
    let mut bytes = serde_json::to_vec(frame).expect("frame serializes");
    bytes.push(b'\n');
    bytes
}

/// Decode a single LF-terminated frame.
pub fn decode_frame(line: &[u8]) -> Result<WireFrame, ToolError> {
    let text = std::str::from_utf8(line)
        .map_err(|e| ToolError::Transport(format!("invalid utf-8 on the wire: {e}")))?;
    serde_json::from_str(text.trim_end_matches('\n'))
        .map_err(|e| ToolError::Transport(format!("malformed frame: {e}")))
}

/// Decode a buffer of concatenated frames.
pub fn decode_frames(bytes: &[u8]) -> Result<Vec<WireFrame>, ToolError> {
    bytes
        .split(|b| *b == b'\n')
        .filter(|line| !line.is_empty())
        .map(decode_frame)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolnet::FrameKind;
    use serde_json::json;

    #[test]
    fn frame_line_roundtrip() {
        let frame = WireFrame {
            id: 7,
            kind: FrameKind::Request,
            method: "tools/call".into(),
            body: json!({"tool": "get_pr_diff", "args": {"pr": 42}}),
        };
        let bytes = encode_frame(&frame);
        assert_eq!(*bytes.last().unwrap(), b'\n');
        assert_eq!(decode_frame(&bytes).unwrap(), frame);
    }

    #[test]
    fn multiple_frames_split_on_lf() {
        let a = WireFrame {
            id: 1,
            kind: FrameKind::Request,
            method: "initialize".into(),
            body: json!({}),
        };
        let b = WireFrame {
            id: 2,
            kind: FrameKind::Response,
            method: "initialize".into(),
            body: json!({"version": "1"}),
        };
        let mut bytes = encode_frame(&a);
        bytes.extend(encode_frame(&b));
        let frames = decode_frames(&bytes).unwrap();
        assert_eq!(frames, vec![a, b]);
    }

    #[test]
    fn garbage_is_a_transport_error() {
        assert!(matches!(
            decode_frame(b"not json\n"),
            Err(ToolError::Transport(_))
        ));
    }
}
