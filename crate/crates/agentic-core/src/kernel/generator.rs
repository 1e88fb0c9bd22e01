//! The pluggable token generator interface and its deterministic mock.

use super::ReasoningBias;
use thiserror::Error;

/// Failure of the underlying token generator.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("generator failure: {0}")]
pub struct GeneratorError(pub String);

/// One generation request.
#[derive(Debug, Clone)]
pub struct GenRequest {
    /// Logical tick the request belongs to.
    pub tick: u64,
    /// Current reasoning-effort bias.
    pub bias: ReasoningBias,
    /// Number of context tokens visible to the generator; attention scores
    /// are reported over these positions.
    pub context_len: usize,
    /// Candidate continuations the caller wants scored (e.g. an action
    /// alphabet). May be empty.
    pub candidates: Vec<String>,
}

/// What a generator reports per call: the emitted text, its token count,
/// per-candidate scores usable for masking, and attention scores over the
/// context tokens (consumed by context pruning).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorOutput {
    pub text: String,
    pub token_count: u64,
    pub candidate_scores: Vec<(String, f64)>,
    pub attention: Vec<f64>,
}

/// A token generator. Real providers adapt to this interface; tests use the
/// deterministic mock.
pub trait TokenGenerator {
    fn generate(&mut self, request: &GenRequest) -> Result<GeneratorOutput, GeneratorError>;
}

/// One scripted emission: a long-form and a short-form variant of the same
/// content. The terse bias selects the short form.
#[derive(Debug, Clone)]
pub struct ScriptStep {
    pub long: String,
    pub short: String,
}

impl ScriptStep {
    pub fn new(long: impl Into<String>, short: impl Into<String>) -> ScriptStep {
        ScriptStep {
            long: long.into(),
            short: short.into(),
        }
    }
}

/// Deterministic scripted generator. Emissions cycle through the script;
/// candidate scores and attention are pure functions of the seed, the call
/// index, and the inputs.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    seed: u64,
    script: Vec<ScriptStep>,
    calls: u64,
}

impl MockGenerator {
    pub fn new(seed: u64, script: Vec<ScriptStep>) -> MockGenerator {
        MockGenerator {
            seed,
            script,
            calls: 0,
        }
    }

    /// Number of whitespace tokens in a piece of text; the mock's token
    /// accounting unit.
    pub fn count_tokens(text: &str) -> u64 {
        text.split_whitespace().count() as u64
    }
}

impl TokenGenerator for MockGenerator {
    fn generate(&mut self, request: &GenRequest) -> Result<GeneratorOutput, GeneratorError> {
        if self.script.is_empty() {
            return Err(GeneratorError("mock generator has no script".into()));
        }
        let step = &self.script[(self.calls as usize) % self.script.len()];
        let text = match request.bias {
            ReasoningBias::Terse => step.short.clone(),
            ReasoningBias::Expansive | ReasoningBias::Neutral => step.long.clone(),
        };
        let candidate_scores = request
            .candidates
            .iter()
            .map(|c| (c.clone(), unit_hash(self.seed, self.calls, c) * 4.0 - 2.0))
            .collect();
        let attention = (0..request.context_len)
            .map(|i| unit_hash(self.seed ^ 0x5eed_a77e, self.calls, &i.to_string()))
            .collect();
        let output = GeneratorOutput {
            token_count: MockGenerator::count_tokens(&text),
            text,
            candidate_scores,
            attention,
        };
        self.calls += 1;
        Ok(output)
    }
}

/// Deterministic hash of (seed, call index, label) into [0, 1).
fn unit_hash(seed: u64, call: u64, label: &str) -> f64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(call.wrapping_add(1));
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
        h ^= h >> 29;
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(bias: ReasoningBias) -> GenRequest {
        GenRequest {
            tick: 0,
            bias,
            context_len: 8,
            candidates: vec!["a".into(), "b".into()],
        }
    }

    #[test]
    fn scripted_emission_and_token_count() {
        let mut gen = MockGenerator::new(7, vec![ScriptStep::new("plan the next move", "plan")]);
        let out = gen.generate(&request(ReasoningBias::Neutral)).unwrap();
        assert_eq!(out.text, "plan the next move");
        assert_eq!(out.token_count, 4);
    }

    #[test]
    fn terse_bias_selects_short_variant() {
        let mut gen = MockGenerator::new(7, vec![ScriptStep::new("think hard about it", "act")]);
        let out = gen.generate(&request(ReasoningBias::Terse)).unwrap();
        assert_eq!(out.text, "act");
        assert_eq!(out.token_count, 1);
    }

    #[test]
    fn deterministic_across_instances() {
        let script = vec![ScriptStep::new("alpha beta", "a"), ScriptStep::new("gamma", "g")];
        let mut g1 = MockGenerator::new(42, script.clone());
        let mut g2 = MockGenerator::new(42, script);
        for _ in 0..4 {
            let o1 = g1.generate(&request(ReasoningBias::Neutral)).unwrap();
            let o2 = g2.generate(&request(ReasoningBias::Neutral)).unwrap();
            assert_eq!(o1, o2);
        }
    }

    #[test]
    fn attention_covers_context_positions() {
        let mut gen = MockGenerator::new(1, vec![ScriptStep::new("x", "x")]);
        let out = gen.generate(&request(ReasoningBias::Neutral)).unwrap();
        assert_eq!(out.attention.len(), 8);
        assert!(out.attention.iter().all(|a| (0.0..1.0).contains(a)));
    }
}
