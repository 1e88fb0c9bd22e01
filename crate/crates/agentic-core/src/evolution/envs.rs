//! Deterministic toy environments for the evolution stages.

use super::{Lesson, ToyPolicy, Verifier};
use crate::kernel::{
    EnvStep, Environment, ExternalAction, Observation, ObservationSource, Trajectory,
};
use serde_json::json;

/// Candidate date formats; one is accepted per environment seed.
pub const DATE_FORMATS: [&str; 4] = ["%Y-%m-%d", "%d/%m/%Y", "%m-%d-%Y", "%Y.%m.%d"];

/// Tool palette of the tool-chain task.
pub const TOOLS: [&str; 4] = ["fetch_data", "analyze_data", "write_report", "send_email"];

/// The common surface the stage runner needs from a toy environment.
pub trait ToyEnv: Environment {
    /// Fixed action table; the policy is a categorical over its indices.
    fn candidates(&self) -> Vec<ExternalAction>;
    fn n_actions(&self) -> usize;
    fn n_features(&self) -> usize;
    /// Context features for one step, optionally conditioned on an
    /// injected lesson. Pure in the environment's static configuration.
    fn features(&self, step_index: usize, lesson: Option<&Lesson>) -> Vec<f64>;
    /// Index of an emitted action within the candidate table.
    fn action_index(&self, action: &ExternalAction) -> Option<usize>;
    /// Dense process reward for one executed action.
    fn process_reward(&self, action_index: usize) -> f64;
    /// Retrieval query describing the task, for lesson injection.
    fn query_context(&self) -> String;
    /// Stable identity of the environment configuration, recorded on
    /// checkpoints.
    fn fingerprint(&self) -> String;
    fn verifier(&self) -> Verifier;
    /// Episode horizon the task needs.
    fn horizon(&self) -> u32;
}

/// One tool accepting exactly one date format among the candidates, fixed
/// per seed. Submitting the wrong format fails the episode with an error
/// observation that names the expected format.
#[derive(Debug, Clone)]
pub struct DateFormatEnv {
    seed: u64,
    correct: usize,
    step: u64,
}

impl DateFormatEnv {
    pub fn new(seed: u64) -> DateFormatEnv {
        DateFormatEnv {
            seed,
            correct: (crate::seed::derive_seed(seed, "date-format-choice") % 4) as usize,
            step: 0,
        }
    }

    pub fn correct_format(&self) -> &'static str {
        DATE_FORMATS[self.correct]
    }

    /// The fixed lesson-following parameter block used by in-context
    /// evolution: lesson-indicator features carry strong weight toward
    /// their format's action; nothing else is informative. Level 1 never
    /// modifies it.
    pub fn lesson_prior_policy(&self) -> ToyPolicy {
        let mut policy = ToyPolicy::zeros(self.n_features(), self.n_actions());
        for i in 0..DATE_FORMATS.len() {
            *policy.param_mut(1 + i, i) = 8.0;
        }
        policy
    }
}

impl Environment for DateFormatEnv {
    fn reset(&mut self, _seed: u64) -> Observation {
        self.step = 0;
        Observation {
            payload: json!({"task": "submit the invoice date to the billing api"}),
            source: ObservationSource::User,
            timestamp: 0,
        }
    }

    fn step(&mut self, action: &ExternalAction) -> EnvStep {
        self.step += 1;
        let used = action
            .arguments
            .get("format")
            .and_then(|v| v.as_str())
            .unwrap_or_default();
        if used == self.correct_format() {
            EnvStep {
                observation: Observation {
                    payload: json!({"tool": "submit_date", "status": "ok"}),
                    source: ObservationSource::Tool,
                    timestamp: self.step,
                },
                reward: 1.0,
                terminal: true,
            }
        } else {
            EnvStep {
                observation: Observation {
                    payload: json!({
                        "tool": "submit_date",
                        "error": "invalid date format",
                        "expected": self.correct_format(),
                        "used": used,
                    }),
                    source: ObservationSource::Tool,
                    timestamp: self.step,
                },
                reward: 0.0,
                terminal: true,
            }
        }
    }

    fn state_hash(&self) -> u64 {
        self.seed ^ (self.step << 8) ^ self.correct as u64
    }
}

impl ToyEnv for DateFormatEnv {
    fn candidates(&self) -> Vec<ExternalAction> {
        DATE_FORMATS
            .iter()
            .map(|fmt| ExternalAction {
                tool_alias: "billing".into(),
                tool_name: "submit_date".into(),
                arguments: json!({ "format": fmt }),
                token_cost: 1,
            })
            .collect()
    }

    fn n_actions(&self) -> usize {
        DATE_FORMATS.len()
    }

    fn n_features(&self) -> usize {
        1 + DATE_FORMATS.len()
    }

    fn features(&self, _step_index: usize, lesson: Option<&Lesson>) -> Vec<f64> {
        let mut features = vec![0.0; self.n_features()];
        features[0] = 1.0;
        if let Some(lesson) = lesson {
            for (i, fmt) in DATE_FORMATS.iter().enumerate() {
                if lesson.text.contains(fmt) {
                    features[1 + i] = 1.0;
                }
            }
        }
        features
    }

    fn action_index(&self, action: &ExternalAction) -> Option<usize> {
        let used = action.arguments.get("format")?.as_str()?;
        DATE_FORMATS.iter().position(|f| *f == used)
    }

    fn process_reward(&self, _action_index: usize) -> f64 {
        0.0
    }

    fn query_context(&self) -> String {
        "date format required by the billing api submit_date tool".into()
    }

    fn fingerprint(&self) -> String {
        format!("date-format:seed={}:correct={}", self.seed, self.correct)
    }

    fn verifier(&self) -> Verifier {
        Verifier::new(|t: &Trajectory| t.outcome() >= 1.0)
    }

    fn horizon(&self) -> u32 {
        1
    }
}

/// Reward 1 iff a specific three-tool sequence executes in order. Each
/// tool comes in a terse (5 tokens) and a verbose (20 tokens) variant;
/// both satisfy the verifier, but the process reward charges −0.01 per
/// token, which is what level 3 optimizes away.
#[derive(Debug, Clone)]
pub struct ToolChainEnv {
    seed: u64,
    target: [usize; 3],
    executed: Vec<usize>,
}

const TOKEN_COST_TERSE: u64 = 5;
const TOKEN_COST_VERBOSE: u64 = 20;

impl ToolChainEnv {
    pub fn new(seed: u64) -> ToolChainEnv {
        // Seed-derived target: the first three of a derived permutation.
        let mut order: Vec<usize> = (0..TOOLS.len()).collect();
        for i in (1..order.len()).rev() {
            let j = (crate::seed::derive_seed_indexed(seed, "tool-chain-shuffle", i as u64)
                % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
        ToolChainEnv {
            seed,
            target: [order[0], order[1], order[2]],
            executed: Vec::new(),
        }
    }

    pub fn target_tools(&self) -> [&'static str; 3] {
        [
            TOOLS[self.target[0]],
            TOOLS[self.target[1]],
            TOOLS[self.target[2]],
        ]
    }

    fn is_verbose(index: usize) -> bool {
        index % 2 == 1
    }

    pub fn token_cost_of(index: usize) -> u64 {
        if Self::is_verbose(index) {
            TOKEN_COST_VERBOSE
        } else {
            TOKEN_COST_TERSE
        }
    }
}

impl Environment for ToolChainEnv {
    fn reset(&mut self, _seed: u64) -> Observation {
        self.executed.clear();
        Observation {
            payload: json!({"task": "produce and deliver the weekly report"}),
            source: ObservationSource::User,
            timestamp: 0,
        }
    }

    fn step(&mut self, action: &ExternalAction) -> EnvStep {
        let tool_index = TOOLS
            .iter()
            .position(|t| *t == action.tool_name)
            .unwrap_or(usize::MAX);
        self.executed.push(tool_index);
        let tick = self.executed.len() as u64;
        let done = self.executed.len() >= 3;
        let success = done && self.executed == self.target;
        EnvStep {
            observation: Observation {
                payload: json!({"tool": action.tool_name, "status": "ok"}),
                source: ObservationSource::Tool,
                timestamp: tick,
            },
            reward: if success { 1.0 } else { 0.0 },
            terminal: done,
        }
    }

    fn state_hash(&self) -> u64 {
        let mut h = self.seed;
        for t in &self.executed {
            h = h.wrapping_mul(31).wrapping_add(*t as u64 + 1);
        }
        h
    }
}

impl ToyEnv for ToolChainEnv {
    fn candidates(&self) -> Vec<ExternalAction> {
        let mut actions = Vec::with_capacity(TOOLS.len() * 2);
        for (t, tool) in TOOLS.iter().enumerate() {
            for verbosity in ["terse", "verbose"] {
                let index = t * 2 + usize::from(verbosity == "verbose");
                actions.push(ExternalAction {
                    tool_alias: "pipeline".into(),
                    tool_name: (*tool).into(),
                    arguments: json!({ "verbosity": verbosity }),
                    token_cost: Self::token_cost_of(index),
                });
            }
        }
        actions
    }

    fn n_actions(&self) -> usize {
        TOOLS.len() * 2
    }

    fn n_features(&self) -> usize {
        4
    }

    fn features(&self, step_index: usize, _lesson: Option<&Lesson>) -> Vec<f64> {
        let mut features = vec![0.0; self.n_features()];
        features[0] = 1.0;
        if step_index < 3 {
            features[1 + step_index] = 1.0;
        }
        features
    }

    fn action_index(&self, action: &ExternalAction) -> Option<usize> {
        let tool = TOOLS.iter().position(|t| *t == action.tool_name)?;
        let verbose = action.arguments.get("verbosity")?.as_str()? == "verbose";
        Some(tool * 2 + usize::from(verbose))
    }

    fn process_reward(&self, action_index: usize) -> f64 {
        -0.01 * Self::token_cost_of(action_index) as f64
    }

    fn query_context(&self) -> String {
        "order of pipeline tools for the weekly report".into()
    }

    fn fingerprint(&self) -> String {
        format!(
            "tool-chain:seed={}:target={}>{}>{}",
            self.seed, self.target[0], self.target[1], self.target[2]
        )
    }

    fn verifier(&self) -> Verifier {
        Verifier::new(|t: &Trajectory| t.outcome() >= 1.0)
    }

    fn horizon(&self) -> u32 {
        3
    }
}
