//! Command-line harness tying the modules together: blueprint validation,
//! seeded runs against simulated environments, evolution stages, and
//! metric reports.

mod commands;
mod fixtures;
mod report;

pub use commands::{cmd_evolve, cmd_memory, cmd_run, cmd_validate, cmd_validate_as, EvolveArgs, MemoryAction};
pub use fixtures::{
    builtin_fixture, load_fixture, BehaviorFixture, EnvFixture, FixtureMode, PlanNodeFixture,
    ServerFixture, ToolFixture,
};
pub use report::write_atomic;

use crate::executor::SpecStats;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

/// Exit codes the CLI maps outcomes onto.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const TASK_FAILURE: i32 = 1;
    pub const VALIDATION_ERROR: i32 = 2;
    pub const INTERNAL_ERROR: i32 = 3;
}

/// Which clock paces a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClockKind {
    #[default]
    Virtual,
    Real,
}

/// One run's configuration. File-based configs use this shape as JSON;
/// command-line flags override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub blueprint_path: PathBuf,
    /// Built-in fixture name or a path to a fixture file.
    pub env_fixture: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub clock: ClockKind,
    #[serde(default)]
    pub speculation: bool,
    /// Context cache target size (entries) for attention-guided pruning.
    #[serde(default = "default_context_budget")]
    pub context_budget: usize,
    #[serde(default)]
    pub report_path: Option<PathBuf>,
    #[serde(default)]
    pub trajectory_log_path: Option<PathBuf>,
    #[serde(default)]
    pub trace_path: Option<PathBuf>,
}

fn default_context_budget() -> usize {
    64
}

/// Metrics one run produces. `commits + rollbacks <= branches` always.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub makespan_ms: u64,
    pub total_tokens: u64,
    pub success: bool,
    pub lambda_trace: Vec<f64>,
    pub evictions: u64,
    pub speculation: SpecStats,
    /// Terminal status of the run (episode mode) or `completed`.
    pub status: String,
}

/// Harness-level errors, each mapping to an exit code.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Validation(String),
    #[error("task failed: {0}")]
    TaskFailure(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => exit_code::VALIDATION_ERROR,
            HarnessError::TaskFailure(_) => exit_code::TASK_FAILURE,
            HarnessError::Internal(_) => exit_code::INTERNAL_ERROR,
        }
    }
}
