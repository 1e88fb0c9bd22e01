//! Token-level masking for constrained decoding.

use std::collections::BTreeMap;

/// Sentinel for forbidden tokens: the most negative finite score. The
/// masked softmax maps it to probability exactly 0.
pub const MASK_SENTINEL: f64 = f64::MIN;

/// Raised when every candidate token is forbidden and decoding cannot
/// proceed.
#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("every candidate token is forbidden; decoding cannot proceed")]
pub struct AllMaskedError;

/// The token prefix emitted so far for the action being decoded.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodingState {
    pub prefix: Vec<String>,
}

impl DecodingState {
    pub fn root() -> DecodingState {
        DecodingState::default()
    }

    pub fn extended(&self, token: &str) -> DecodingState {
        let mut prefix = self.prefix.clone();
        prefix.push(token.to_string());
        DecodingState { prefix }
    }
}

/// Decides, per decoding state, which candidate tokens may be emitted.
/// Implementations must be prefix-safe: a token leading to some admissible
/// completion is never forbidden.
pub trait TokenMask {
    fn allows(&self, state: &DecodingState, token: &str) -> bool;
}

/// Mask that permits every token.
#[derive(Debug, Clone, Copy, Default)]
pub struct AllowAllMask;

impl TokenMask for AllowAllMask {
    fn allows(&self, _state: &DecodingState, _token: &str) -> bool {
        true
    }
}

/// Prefix trie over the token encodings of all admissible actions. A token
/// is allowed iff prefix+token is itself a prefix of some admissible
/// encoding, which makes the mask prefix-safe by construction.
#[derive(Debug, Clone, Default)]
pub struct TrieMask {
    root: TrieNode,
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: BTreeMap<String, TrieNode>,
}

impl TrieMask {
    pub fn from_encodings<I, E>(encodings: I) -> TrieMask
    where
        I: IntoIterator<Item = E>,
        E: IntoIterator<Item = String>,
    {
        let mut root = TrieNode::default();
        for encoding in encodings {
            let mut node = &mut root;
            for token in encoding {
                node = node.children.entry(token).or_default();
            }
        }
        TrieMask { root }
    }

    fn node_at(&self, prefix: &[String]) -> Option<&TrieNode> {
        let mut node = &self.root;
        for token in prefix {
            node = node.children.get(token)?;
        }
        Some(node)
    }
}

impl TokenMask for TrieMask {
    fn allows(&self, state: &DecodingState, token: &str) -> bool {
        match self.node_at(&state.prefix) {
            Some(node) => node.children.contains_key(token),
            None => false,
        }
    }
}

/// Apply a token mask to candidate scores: forbidden tokens receive the
/// minus-infinity sentinel, allowed scores pass through unchanged.
pub fn mask_logits(
    scores: &[(String, f64)],
    mask: &dyn TokenMask,
    state: &DecodingState,
) -> Result<Vec<(String, f64)>, AllMaskedError> {
    assert!(!scores.is_empty(), "scores must be nonempty");
    let masked: Vec<(String, f64)> = scores
        .iter()
        .map(|(token, score)| {
            if mask.allows(state, token) {
                (token.clone(), *score)
            } else {
                (token.clone(), MASK_SENTINEL)
            }
        })
        .collect();
    if masked.iter().all(|(_, s)| *s == MASK_SENTINEL) {
        return Err(AllMaskedError);
    }
    Ok(masked)
}

/// Softmax that maps the mask sentinel to probability exactly 0 by
/// clamping, leaving a proper distribution over the surviving tokens.
pub fn masked_softmax(scores: &[(String, f64)]) -> Vec<(String, f64)> {
    let live_max = scores
        .iter()
        .filter(|(_, s)| *s != MASK_SENTINEL)
        .map(|(_, s)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = scores
        .iter()
        .map(|(_, s)| {
            if *s == MASK_SENTINEL {
                0.0
            } else {
                (*s - live_max).exp()
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in &mut weights {
            *w /= total;
        }
    }
    scores
        .iter()
        .zip(weights)
        .map(|((t, _), p)| (t.clone(), p))
        .collect()
}
