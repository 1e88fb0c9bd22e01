//! Environment fixtures: simulated servers plus either an execution plan
//! or a toy episode environment.

use super::HarnessError;
use crate::executor::{build_dag, PlanDAG, PlanNode};
use crate::toolnet::{SimServer, SimServerConfig, ToolBehavior, ToolDescriptor};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::Path;

/// What kind of run a fixture drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureMode {
    /// A DAG of reasoning and tool-call nodes executed by the scheduler.
    Plan,
    /// A toy environment driven through the episode loop.
    Episode,
}

/// A declared tool on a simulated server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolFixture {
    pub name: String,
    #[serde(default)]
    pub latency_ms: Option<u64>,
    pub behavior: BehaviorFixture,
    #[serde(default)]
    pub ignorable_fields: Vec<String>,
    #[serde(default)]
    pub idempotent: bool,
}

/// Declarative tool behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorFixture {
    Echo,
    Const(Value),
    Fail(String),
}

impl BehaviorFixture {
    fn to_behavior(&self) -> ToolBehavior {
        match self {
            BehaviorFixture::Echo => ToolBehavior::Echo,
            BehaviorFixture::Const(v) => ToolBehavior::Const(v.clone()),
            BehaviorFixture::Fail(m) => ToolBehavior::Fail(m.clone()),
        }
    }
}

/// One simulated server declaration: `{tools, latencies, failure_rate,
/// seed}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerFixture {
    pub alias: String,
    pub url: String,
    pub tools: Vec<ToolFixture>,
    #[serde(default)]
    pub failure_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_latency")]
    pub default_latency_ms: u64,
}

fn default_latency() -> u64 {
    10
}

impl ServerFixture {
    /// Materialize the simulated server.
    pub fn build(&self) -> SimServer {
        let mut latency_ms = BTreeMap::new();
        for tool in &self.tools {
            if let Some(l) = tool.latency_ms {
                latency_ms.insert(tool.name.clone(), l);
            }
        }
        let tools = self
            .tools
            .iter()
            .map(|t| {
                let mut descriptor = ToolDescriptor::open(&t.name);
                descriptor.ignorable_fields = t.ignorable_fields.clone();
                descriptor.idempotent = t.idempotent || descriptor.idempotent;
                (descriptor, t.behavior.to_behavior())
            })
            .collect();
        SimServer::new(
            tools,
            SimServerConfig {
                latency_ms,
                default_latency_ms: self.default_latency_ms,
                failure_rate: self.failure_rate,
                seed: self.seed,
            },
        )
    }

    pub fn latency_for(&self, tool: &str) -> u64 {
        self.tools
            .iter()
            .find(|t| t.name == tool)
            .and_then(|t| t.latency_ms)
            .unwrap_or(self.default_latency_ms)
    }
}

/// One plan node declaration. Tool nodes inherit their latency from the
/// serving fixture unless overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNodeFixture {
    pub id: String,
    #[serde(default)]
    pub deps: Vec<String>,
    #[serde(default)]
    pub tool: Option<ToolCallFixture>,
    #[serde(default)]
    pub reason: Option<String>,
    #[serde(default)]
    pub latency_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallFixture {
    pub alias: String,
    pub name: String,
    #[serde(default)]
    pub args: Value,
}

/// A complete environment fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvFixture {
    pub name: String,
    pub mode: FixtureMode,
    #[serde(default)]
    pub servers: Vec<ServerFixture>,
    #[serde(default)]
    pub plan: Vec<PlanNodeFixture>,
    /// Toy environment name for episode mode.
    #[serde(default)]
    pub env: Option<String>,
}

impl EnvFixture {
    /// Compile the declared plan into a validated DAG, resolving tool-node
    /// latencies from their servers.
    pub fn build_plan(&self) -> Result<PlanDAG, HarnessError> {
        let mut nodes = Vec::new();
        for decl in &self.plan {
            let deps: Vec<&str> = decl.deps.iter().map(String::as_str).collect();
            let node = match (&decl.tool, &decl.reason) {
                (Some(tool), None) => {
                    let server = self
                        .servers
                        .iter()
                        .find(|s| s.alias == tool.alias)
                        .ok_or_else(|| {
                            HarnessError::Validation(format!(
                                "plan node `{}` names unknown server alias `{}`",
                                decl.id, tool.alias
                            ))
                        })?;
                    let latency = decl
                        .latency_ms
                        .unwrap_or_else(|| server.latency_for(&tool.name));
                    PlanNode::tool(
                        &decl.id,
                        &deps,
                        &tool.alias,
                        &tool.name,
                        tool.args.clone(),
                        latency,
                    )
                }
                (None, Some(text)) => {
                    PlanNode::reason(&decl.id, &deps, text, decl.latency_ms.unwrap_or(5))
                }
                _ => {
                    return Err(HarnessError::Validation(format!(
                        "plan node `{}` must declare exactly one of tool/reason",
                        decl.id
                    )))
                }
            };
            nodes.push(node);
        }
        build_dag(nodes).map_err(|e| HarnessError::Validation(e.to_string()))
    }
}

const STOCK_COMPARISON: &str = include_str!("../../../../fixtures/envs/stock_comparison.json");
const SLOW_TOOL: &str = include_str!("../../../../fixtures/envs/slow_tool.json");
const DATE_FORMAT: &str = include_str!("../../../../fixtures/envs/date_format.json");
const TOOL_CHAIN: &str = include_str!("../../../../fixtures/envs/tool_chain.json");

/// A built-in fixture by name.
pub fn builtin_fixture(name: &str) -> Option<EnvFixture> {
    let text = match name {
        "stock-comparison" => STOCK_COMPARISON,
        "slow-tool" => SLOW_TOOL,
        "date-format" => DATE_FORMAT,
        "tool-chain" => TOOL_CHAIN,
        _ => return None,
    };
    Some(serde_json::from_str(text).expect("built-in fixtures parse"))
}

/// Resolve a fixture by built-in name or file path.
pub fn load_fixture(name_or_path: &str) -> Result<EnvFixture, HarnessError> {
    if let Some(fixture) = builtin_fixture(name_or_path) {
        return Ok(fixture);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(HarnessError::Validation(format!(
            "unknown fixture `{name_or_path}` (not a built-in, not a file)"
        )));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Internal(format!("cannot read fixture: {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| HarnessError::Validation(format!("malformed fixture: {e}")))
}
