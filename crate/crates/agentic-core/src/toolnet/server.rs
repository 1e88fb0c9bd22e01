//! In-process simulated tool servers.

use super::{FrameKind, SimServerConfig, ToolDescriptor, WireFrame};
use serde_json::{json, Value};
use std::collections::BTreeMap;

/// Wire protocol version this implementation speaks.
pub const PROTOCOL_VERSION: &str = "1";

/// How a simulated tool answers.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolBehavior {
    /// Respond with the arguments.
    Echo,
    /// Respond with a fixed value.
    Const(Value),
    /// Always fault with this message.
    Fail(String),
}

/// A deterministic simulated tool server. Responds per its configured
/// latency and failure schedule; every frame that reaches it is logged.
#[derive(Debug, Clone)]
pub struct SimServer {
    version: String,
    tools: BTreeMap<String, (ToolDescriptor, ToolBehavior)>,
    config: SimServerConfig,
    request_log: Vec<WireFrame>,
}

impl SimServer {
    pub fn new(
        tools: Vec<(ToolDescriptor, ToolBehavior)>,
        config: SimServerConfig,
    ) -> SimServer {
        SimServer {
            version: PROTOCOL_VERSION.to_string(),
            tools: tools
                .into_iter()
                .map(|(d, b)| (d.name.clone(), (d, b)))
                .collect(),
            config,
            request_log: Vec::new(),
        }
    }

    /// Override the advertised protocol version (handshake tests).
    pub fn with_version(mut self, version: &str) -> SimServer {
        self.version = version.to_string();
        self
    }

    /// Every request frame that reached this server, in arrival order.
    pub fn request_log(&self) -> &[WireFrame] {
        &self.request_log
    }

    /// Number of `tools/call` requests that reached the server.
    pub fn call_count(&self) -> usize {
        self.request_log
            .iter()
            .filter(|f| f.method == "tools/call")
            .count()
    }

    pub fn advertised_tools(&self) -> Vec<&ToolDescriptor> {
        self.tools.values().map(|(d, _)| d).collect()
    }

    pub fn descriptor(&self, tool: &str) -> Option<&ToolDescriptor> {
        self.tools.get(tool).map(|(d, _)| d)
    }

    /// Latency the server will charge for one call of `tool`.
    pub fn latency_for(&self, tool: &str) -> u64 {
        self.config
            .latency_ms
            .get(tool)
            .copied()
            .unwrap_or(self.config.default_latency_ms)
    }

    /// Handle one frame and produce its response frame.
    pub fn handle_frame(&mut self, frame: WireFrame) -> WireFrame {
        self.request_log.push(frame.clone());
        match frame.method.as_str() {
            "initialize" => WireFrame {
                id: frame.id,
                kind: FrameKind::Response,
                method: frame.method,
                body: json!({ "version": self.version }),
            },
            "tools/list" => {
                // BTreeMap iteration is already lexicographic by name.
                let tools: Vec<Value> = self
                    .tools
                    .values()
                    .map(|(d, _)| serde_json::to_value(d).expect("descriptor serializes"))
                    .collect();
                WireFrame {
                    id: frame.id,
                    kind: FrameKind::Response,
                    method: frame.method,
                    body: json!({ "tools": tools }),
                }
            }
            "tools/call" => {
                let tool = frame
                    .body
                    .get("tool")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string();
                let args = frame.body.get("args").cloned().unwrap_or(Value::Null);
                match self.respond(&tool, &args) {
                    Ok(body) => WireFrame {
                        id: frame.id,
                        kind: FrameKind::Response,
                        method: frame.method,
                        body,
                    },
                    Err(message) => WireFrame {
                        id: frame.id,
                        kind: FrameKind::Error,
                        method: frame.method,
                        body: json!({ "message": message }),
                    },
                }
            }
            other => WireFrame {
                id: frame.id,
                kind: FrameKind::Error,
                method: other.to_string(),
                body: json!({ "message": format!("unknown method `{other}`") }),
            },
        }
    }

    /// The tool's deterministic response: content-keyed failure schedule
    /// first, then the configured behavior.
    fn respond(&self, tool: &str, args: &Value) -> Result<Value, String> {
        let (_, behavior) = self
            .tools
            .get(tool)
            .ok_or_else(|| format!("unknown tool `{tool}`"))?;
        if self.fails(tool, args) {
            return Err(format!("simulated fault in `{tool}`"));
        }
        match behavior {
            ToolBehavior::Echo => Ok(args.clone()),
            ToolBehavior::Const(value) => Ok(value.clone()),
            ToolBehavior::Fail(message) => Err(message.clone()),
        }
    }

    /// Pure function of (seed, tool, arguments): below the failure rate
    /// the call faults. Identical calls share their fate across runs and
    /// schedules.
    fn fails(&self, tool: &str, args: &Value) -> bool {
        if self.config.failure_rate <= 0.0 {
            return false;
        }
        if self.config.failure_rate >= 1.0 {
            return true;
        }
        let canonical = serde_json::to_string(args).unwrap_or_default();
        let mut h: u64 = self.config.seed ^ 0x6b65_7973_7465_7221;
        for b in tool.bytes().chain(canonical.bytes()) {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
        h ^= h >> 33;
        let draw = (h >> 11) as f64 / (1u64 << 53) as f64;
        draw < self.config.failure_rate
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn server(failure_rate: f64, seed: u64) -> SimServer {
        SimServer::new(
            vec![
                (ToolDescriptor::open("get_echo"), ToolBehavior::Echo),
                (
                    ToolDescriptor::open("get_const"),
                    ToolBehavior::Const(json!({"fixed": true})),
                ),
            ],
            SimServerConfig {
                failure_rate,
                seed,
                ..SimServerConfig::default()
            },
        )
    }

    #[test]
    fn zero_failure_rate_always_succeeds() {
        let server = server(0.0, 1);
        for i in 0..50 {
            assert!(server.respond("get_echo", &json!({"i": i})).is_ok());
        }
    }

    #[test]
    fn unit_failure_rate_always_faults() {
        let server = server(1.0, 1);
        for i in 0..50 {
            assert!(server.respond("get_echo", &json!({"i": i})).is_err());
        }
    }

    #[test]
    fn failure_schedule_reproducible_under_seed() {
        let a = server(0.5, 42);
        let b = server(0.5, 42);
        let pattern_a: Vec<bool> = (0..100)
            .map(|i| a.respond("get_echo", &json!({"i": i})).is_err())
            .collect();
        let pattern_b: Vec<bool> = (0..100)
            .map(|i| b.respond("get_echo", &json!({"i": i})).is_err())
            .collect();
        assert_eq!(pattern_a, pattern_b);
        // A 0.5 rate actually mixes outcomes.
        assert!(pattern_a.iter().any(|f| *f));
        assert!(pattern_a.iter().any(|f| !*f));
    }

    #[test]
    fn unknown_method_gets_an_error_frame() {
        let mut server = server(0.0, 1);
        let response = server.handle_frame(WireFrame {
            id: 3,
            kind: FrameKind::Request,
            method: "tools/destroy".into(),
            body: json!({}),
        });
        assert_eq!(response.kind, FrameKind::Error);
        assert_eq!(response.id, 3);
    }
}
