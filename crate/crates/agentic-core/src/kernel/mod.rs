//! The governed episode loop: observation/reasoning/action types, reward
//! composition, and trajectory accounting.
//!
//! Execution alternates a reasoning step and an action step each tick.
//! Reasoning never mutates the environment; external actions go through the
//! guard's projection before emission.

mod env;
mod episode;
mod generator;
mod log;
mod reward;

pub use env::{EnvStep, Environment, ScriptedEnvironment};
pub use episode::{
    run_episode, ActionPolicy, AuditEvent, EpisodeDriver, EpisodeError, EpisodeOptions,
    EpisodeOutcome, ReasoningPolicy, TableActionPolicy,
};
pub use generator::{
    GenRequest, GeneratorError, GeneratorOutput, MockGenerator, ScriptStep, TokenGenerator,
};
pub use log::{trajectory_log_lines, LogLine};
pub use reward::{composite_reward, discounted_return};

use crate::memory::MemoryRecord;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Where an observation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationSource {
    User,
    Tool,
    System,
}

/// A partial view of the environment delivered to the agent. Immutable
/// once emitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub payload: Value,
    pub source: ObservationSource,
    /// Logical tick at which the observation was emitted.
    pub timestamp: u64,
}

/// The kind of internal cognitive operation a trace performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Plan,
    Critique,
    Verification,
    Hypothesis,
}

/// An internal reasoning step. Executing one never mutates the world state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub text: String,
    pub kind: TraceKind,
    pub token_cost: u64,
}

/// An action with external side effects, bound to a tool server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalAction {
    pub tool_alias: String,
    pub tool_name: String,
    pub arguments: Value,
    pub token_cost: u64,
}

/// Three-level reasoning effort knob driven by the budget controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningBias {
    Expansive,
    Neutral,
    Terse,
}

/// One entry of the in-context history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryItem {
    Observation(Observation),
    Reasoning(ReasoningTrace),
    Action(ExternalAction),
}

impl HistoryItem {
    fn token_cost(&self) -> u64 {
        match self {
            // Observations are environment-supplied; they carry no
            // generation cost of their own.
            HistoryItem::Observation(_) => 0,
            HistoryItem::Reasoning(z) => z.token_cost,
            HistoryItem::Action(a) => a.token_cost,
        }
    }
}

/// The agent's conditioning context: ordered history plus retrieved
/// long-term records. `token_count` tracks the member costs exactly.
#[derive(Debug, Clone, Default)]
pub struct MemoryContext {
    pub history: Vec<HistoryItem>,
    pub retrieved: Vec<MemoryRecord>,
    pub token_count: u64,
}

impl MemoryContext {
    pub fn new() -> MemoryContext {
        MemoryContext::default()
    }

    pub fn push(&mut self, item: HistoryItem) {
        self.token_count += item.token_cost();
        self.history.push(item);
    }

    /// Attach a retrieved record, charging its text length (in whitespace
    /// tokens) against the context count.
    pub fn attach_retrieved(&mut self, record: MemoryRecord) {
        self.token_count += record.insight.text.split_whitespace().count() as u64;
        self.retrieved.push(record);
    }

    /// Number of reasoning traces in the history so far.
    pub fn reasoning_steps(&self) -> usize {
        self.history
            .iter()
            .filter(|h| matches!(h, HistoryItem::Reasoning(_)))
            .count()
    }
}

/// Composite reward inputs for one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSignal {
    /// Sparse terminal outcome.
    pub outcome: f64,
    /// Dense per-reasoning-step process rewards.
    pub process: Vec<f64>,
    pub weight_lambda: f64,
}

impl RewardSignal {
    pub fn total(&self) -> f64 {
        composite_reward(self.outcome, &self.process, self.weight_lambda)
    }
}

/// Why an episode stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    EnvTerminal,
    HorizonReached,
    BudgetExhausted,
}

/// One completed tick: observation in, reasoning, action out, reward back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub tick: u64,
    pub observation: Observation,
    pub reasoning: ReasoningTrace,
    pub action: ExternalAction,
    pub reward: f64,
}

impl TrajectoryStep {
    pub fn token_cost(&self) -> u64 {
        self.reasoning.token_cost + self.action.token_cost
    }
}

/// Ordered record of one episode. Append-only while running, immutable
/// afterward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub status: TerminalStatus,
    /// Opaque reference to the terminal environment state.
    pub terminal_state_ref: u64,
    /// The last observation the environment emitted; steps carry only
    /// their input observations, so a terminal error would otherwise be
    /// unrecorded.
    pub final_observation: Option<Observation>,
    pub total_tokens: u64,
}

impl Trajectory {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    /// Terminal outcome in {0, 1}: 1 iff the final step carries reward ≥ 1.
    pub fn outcome(&self) -> f64 {
        if self.steps.last().map(|s| s.reward >= 1.0).unwrap_or(false) {
            1.0
        } else {
            0.0
        }
    }
}

/// Episode-level configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Discount factor in `[0, 1)`.
    pub discount_gamma: f64,
    /// Maximum number of ticks; at least 1.
    pub horizon: u32,
    pub seed: u64,
}

impl EpisodeConfig {
    pub fn new(horizon: u32, seed: u64) -> EpisodeConfig {
        assert!(horizon >= 1, "horizon must be at least 1");
        EpisodeConfig {
            discount_gamma: 0.99,
            horizon,
            seed,
        }
    }
}
