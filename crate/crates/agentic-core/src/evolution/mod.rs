//! Self-evolution at desk scale: lesson reflection and injection
//! (level 1), verifier-filtered fine-tuning (level 2), and
//! advantage-weighted policy-gradient updates (level 3), over a toy
//! softmax policy and deterministic environments.

mod envs;
mod grpo;
mod policy;
mod reflect;
mod stage;
mod star;

pub use envs::{DateFormatEnv, ToolChainEnv, ToyEnv, DATE_FORMATS, TOOLS};
pub use grpo::{estimate_advantages, pg_objective, policy_gradient_update, BatchTooSmall};
pub use policy::{PolicyCheckpoint, ToyPolicy};
pub use reflect::{inject_lessons, lesson_of_record, reflect, store_lesson, NotAFailure};
pub use stage::{
    generate_sample, run_evolution_stage, EpochStats, EvolutionConfig, EvolutionLevel,
    EvolutionReport,
};
pub use star::{nll_loss, sft_update, star_filter, EmptyDataset};

use crate::kernel::Trajectory;
use serde::{Deserialize, Serialize};

/// A corrective insight distilled from a failed trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lesson {
    pub text: String,
    pub root_cause: String,
    /// Identifier of the trajectory the lesson came from.
    pub source_trajectory: String,
    pub embedding: Vec<f64>,
}

/// One (features, action) step of a toy trajectory, the view gradient
/// computations consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyStep {
    pub features: Vec<f64>,
    pub action: usize,
    pub token_cost: u64,
    /// Dense process reward supplied by the environment.
    pub process_reward: f64,
}

/// A trajectory paired with its feature/action view and training
/// annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub trajectory: Trajectory,
    pub steps: Vec<ToyStep>,
    /// Set only by a verifier.
    pub verified: bool,
    /// Present only after advantage estimation; one entry per step.
    pub advantage_per_step: Vec<f64>,
}

impl TrajectorySample {
    pub fn new(trajectory: Trajectory, steps: Vec<ToyStep>) -> TrajectorySample {
        TrajectorySample {
            trajectory,
            steps,
            verified: false,
            advantage_per_step: Vec::new(),
        }
    }

    pub fn outcome(&self) -> f64 {
        self.trajectory.outcome()
    }

    pub fn process_rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.process_reward).collect()
    }
}

/// A deterministic terminal-state check.
pub struct Verifier {
    check: Box<dyn Fn(&Trajectory) -> bool + Send + Sync>,
}

impl Verifier {
    pub fn new(check: impl Fn(&Trajectory) -> bool + Send + Sync + 'static) -> Verifier {
        Verifier {
            check: Box::new(check),
        }
    }

    /// Binary outcome evaluation of the terminal state.
    pub fn check(&self, trajectory: &Trajectory) -> bool {
        (self.check)(trajectory)
    }
}

impl std::fmt::Debug for Verifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Verifier").finish_non_exhaustive()
    }
}
