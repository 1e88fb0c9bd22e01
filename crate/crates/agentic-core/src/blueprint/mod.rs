//! Agent blueprint parsing, validation, and contract enforcement.
//!
//! A blueprint is a declarative document (YAML or JSON) describing an agent's
//! identity, interface contracts, constraints, tool bindings, and execution
//! policy. Parsing is strict: unknown keys are rejected at every level, and
//! every diagnostic carries a path to the offending node.

mod gate;
mod hydrate;
mod parse;
mod schema;

pub use gate::{contract_gate, GateOutcome, RawOutput, DEFAULT_GATE_RETRIES};
pub use hydrate::{
    compose_check, hydrate, FsLoader, HydrateError, HydratedBlueprint, Loader,
    DEFAULT_HYDRATION_DEPTH,
};
pub use parse::{parse_blueprint, parse_blueprint_as, serialize_blueprint, serialize_blueprint_as, DocFormat};
pub use schema::{validate_payload, SchemaNode, SchemaType, ValidationReport, Violation};

use serde_json::Value;
use thiserror::Error;

/// Error raised while parsing or validating a blueprint document.
///
/// Both variants carry a path to the offending node (`$` is the document
/// root; syntax errors carry the parser's location string instead).
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BlueprintError {
    /// The document is not well-formed YAML/JSON.
    #[error("syntax error at {path}: {message}")]
    Syntax { path: String, message: String },
    /// The document is well-formed but violates the blueprint schema or one
    /// of its invariants.
    #[error("schema error at {path}: expected {expected}, found {found}")]
    Schema {
        path: String,
        expected: String,
        found: String,
    },
}

impl BlueprintError {
    /// Path to the offending node.
    pub fn path(&self) -> &str {
        match self {
            BlueprintError::Syntax { path, .. } => path,
            BlueprintError::Schema { path, .. } => path,
        }
    }

    pub(crate) fn schema(
        path: impl Into<String>,
        expected: impl Into<String>,
        found: impl Into<String>,
    ) -> Self {
        BlueprintError::Schema {
            path: path.into(),
            expected: expected.into(),
            found: found.into(),
        }
    }
}

/// A parsed, validated agent blueprint. Immutable after parse; cheap to
/// clone and safe to share across tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct Blueprint {
    pub metadata: Metadata,
    pub interface: InterfaceContract,
    pub constraints: ConstraintConfig,
    pub action_space: ActionSpaceConfig,
    pub execution_policy: ExecutionPolicyConfig,
}

/// Agent identity block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metadata {
    /// Machine identifier, `[a-z0-9_]+`.
    pub id: String,
    /// Display name.
    pub name: String,
    pub version: SemVer,
    /// Defaults to empty, never absent after parse.
    pub authors: Vec<String>,
    pub tags: Vec<String>,
}

/// Exactly three numeric components; pre-release tags are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SemVer {
    pub major: u64,
    pub minor: u64,
    pub patch: u64,
}

impl SemVer {
    /// Parse `major.minor.patch`. Anything else (two components, suffixes,
    /// non-digits) is rejected.
    pub fn parse(s: &str) -> Option<SemVer> {
        let mut parts = s.split('.');
        let major = parse_component(parts.next()?)?;
        let minor = parse_component(parts.next()?)?;
        let patch = parse_component(parts.next()?)?;
        if parts.next().is_some() {
            return None;
        }
        Some(SemVer {
            major,
            minor,
            patch,
        })
    }
}

fn parse_component(s: &str) -> Option<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

impl std::fmt::Display for SemVer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

/// Input and output schemas enforced at the agent boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceContract {
    pub input_schema: SchemaNode,
    pub output_schema: SchemaNode,
}

/// Declared constraint block.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConstraintConfig {
    /// When true, composed child agents may only tighten (never widen)
    /// the effective constraints.
    pub tighten_only_invariant: bool,
    /// Token budget for one task/session, in tokens. Must be positive
    /// when present.
    pub budget_max_tokens: Option<u64>,
}

/// Binding of an agent to one tool server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolServerBinding {
    pub alias: String,
    pub url: String,
    /// Explicit whitelist; empty means no tools callable on this server.
    pub allow_tools: Vec<String>,
}

/// Binding of an agent to a locally-defined child agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalAgentBinding {
    pub alias: String,
    pub source: String,
}

/// Tool servers and child agents available to the agent.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActionSpaceConfig {
    pub mcp_servers: Vec<ToolServerBinding>,
    pub local_agents: Vec<LocalAgentBinding>,
}

/// How the runtime should drive the underlying generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToolChoice {
    Auto,
    Required,
    None,
}

impl ToolChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            ToolChoice::Auto => "auto",
            ToolChoice::Required => "required",
            ToolChoice::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<ToolChoice> {
        match s {
            "auto" => Some(ToolChoice::Auto),
            "required" => Some(ToolChoice::Required),
            "none" => Some(ToolChoice::None),
            _ => None,
        }
    }
}

/// Execution policy block (`execution_policy` in the document).
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionPolicyConfig {
    /// Loop implementation identifier (`execution_policy.id`).
    pub policy_id: String,
    pub provider: String,
    pub model: String,
    pub instructions: String,
    /// Episode horizon; at least 1.
    pub max_steps: u32,
    /// Sampling temperature in `[0, 2]`.
    pub temperature: f64,
    pub tool_choice: ToolChoice,
}

impl Default for ExecutionPolicyConfig {
    fn default() -> Self {
        ExecutionPolicyConfig {
            policy_id: String::new(),
            provider: "mock".to_string(),
            model: "scripted".to_string(),
            instructions: String::new(),
            max_steps: 10,
            temperature: 1.0,
            tool_choice: ToolChoice::Auto,
        }
    }
}

impl Blueprint {
    /// The server binding for `alias`, if any.
    pub fn server(&self, alias: &str) -> Option<&ToolServerBinding> {
        self.action_space
            .mcp_servers
            .iter()
            .find(|s| s.alias == alias)
    }
}

/// Payload values exchanged at the agent boundary.
pub type Payload = Value;
