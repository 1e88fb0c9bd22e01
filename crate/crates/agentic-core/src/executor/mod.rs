//! Plan compilation into dependency DAGs, critical-path analysis, parallel
//! and speculative execution, and attention-guided context pruning.

mod clock;
mod path;
mod prune;
mod schedule;
mod speculate;

pub use clock::{Clock, RealClock, VirtualClock};
pub use path::critical_path;
#[doc(hidden)]
pub use path::critical_path_bruteforce;
pub use prune::{prune_context, ContextCache, ContextCacheEntry, ATTENTION_WINDOW};
pub use schedule::{
    execute_dag, render_arguments, ExecutionReport, ExecutionResult, FnToolRunner, NodeFault,
    NodeRunner, SpecStats, SpeculationConfig, TraceEvent, TraceEventKind,
};
pub use speculate::{
    resolve, speculate, BranchStatus, BufferedStep, Matcher, OutputPredictor, Resolution,
    SpeculationBranch, MAX_SPECULATION_DEPTH,
};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Node identifier within one plan.
pub type NodeId = String;

/// What a plan node does when executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodePayload {
    /// Internal reasoning; produces a value without external effects.
    Reason { text: String },
    /// External tool invocation template.
    ToolCall {
        tool_alias: String,
        tool_name: String,
        arguments: Value,
    },
}

impl NodePayload {
    pub fn is_tool_call(&self) -> bool {
        matches!(self, NodePayload::ToolCall { .. })
    }
}

/// One node of an execution plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub id: NodeId,
    pub deps: Vec<NodeId>,
    pub payload: NodePayload,
    /// Simulated or measured execution latency, in milliseconds.
    pub latency_ms: u64,
}

impl PlanNode {
    pub fn reason(id: &str, deps: &[&str], text: &str, latency_ms: u64) -> PlanNode {
        PlanNode {
            id: id.to_string(),
            deps: deps.iter().map(|d| d.to_string()).collect(),
            payload: NodePayload::Reason {
                text: text.to_string(),
            },
            latency_ms,
        }
    }

    pub fn tool(
        id: &str,
        deps: &[&str],
        alias: &str,
        tool: &str,
        arguments: Value,
        latency_ms: u64,
    ) -> PlanNode {
        PlanNode {
            id: id.to_string(),
            deps: deps.iter().map(|d| d.to_string()).collect(),
            payload: NodePayload::ToolCall {
                tool_alias: alias.to_string(),
                tool_name: tool.to_string(),
                arguments,
            },
            latency_ms,
        }
    }
}

/// Plan validation errors.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("plan contains no nodes")]
    EmptyPlan,
    #[error("duplicate node id `{0}`")]
    DuplicateId(NodeId),
    #[error("node `{node}` depends on missing node `{missing}`")]
    DanglingDep { node: NodeId, missing: NodeId },
    #[error("dependency cycle: {}", cycle.join(" -> "))]
    Cycle { cycle: Vec<NodeId> },
}

/// A validated, acyclic execution plan.
#[derive(Debug, Clone)]
pub struct PlanDAG {
    nodes: BTreeMap<NodeId, PlanNode>,
    /// Topological order, deterministic (Kahn's algorithm with ordered
    /// ready set).
    topo: Vec<NodeId>,
}

impl PlanDAG {
    pub fn nodes(&self) -> &BTreeMap<NodeId, PlanNode> {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> &PlanNode {
        &self.nodes[id]
    }

    pub fn topo_order(&self) -> &[NodeId] {
        &self.topo
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Ids of nodes with no dependencies.
    pub fn roots(&self) -> Vec<&NodeId> {
        self.topo
            .iter()
            .filter(|id| self.nodes[*id].deps.is_empty())
            .collect()
    }

    /// Ids of nodes nothing depends on.
    pub fn leaves(&self) -> Vec<&NodeId> {
        let mut has_dependent: BTreeSet<&NodeId> = BTreeSet::new();
        for node in self.nodes.values() {
            for dep in &node.deps {
                has_dependent.insert(dep);
            }
        }
        self.topo
            .iter()
            .filter(|id| !has_dependent.contains(id))
            .collect()
    }

    /// Direct dependents of a node.
    pub fn dependents(&self, id: &str) -> Vec<&NodeId> {
        self.topo
            .iter()
            .filter(|n| self.nodes[*n].deps.iter().any(|d| d == id))
            .collect()
    }
}

/// Validate a plan into a DAG: unique ids, resolvable dependencies, no
/// cycles, at least one root.
pub fn build_dag(plan: Vec<PlanNode>) -> Result<PlanDAG, PlanError> {
    if plan.is_empty() {
        return Err(PlanError::EmptyPlan);
    }
    let mut nodes: BTreeMap<NodeId, PlanNode> = BTreeMap::new();
    for node in plan {
        if nodes.contains_key(&node.id) {
            return Err(PlanError::DuplicateId(node.id));
        }
        nodes.insert(node.id.clone(), node);
    }
    for node in nodes.values() {
        for dep in &node.deps {
            if !nodes.contains_key(dep) {
                return Err(PlanError::DanglingDep {
                    node: node.id.clone(),
                    missing: dep.clone(),
                });
            }
            if dep == &node.id {
                return Err(PlanError::Cycle {
                    cycle: vec![node.id.clone(), node.id.clone()],
                });
            }
        }
    }

    // Kahn's algorithm over an ordered ready set gives a deterministic
    // topological order and detects cycles.
    let mut in_degree: BTreeMap<&NodeId, usize> =
        nodes.iter().map(|(id, n)| (id, n.deps.len())).collect();
    let mut ready: BTreeSet<&NodeId> = in_degree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| *id)
        .collect();
    let mut topo: Vec<NodeId> = Vec::with_capacity(nodes.len());
    while let Some(id) = ready.iter().next().cloned() {
        ready.remove(id);
        topo.push(id.clone());
        for (nid, node) in &nodes {
            if node.deps.iter().any(|d| d == id) {
                let d = in_degree.get_mut(nid).expect("known node");
                *d -= 1;
                if *d == 0 {
                    ready.insert(nid);
                }
            }
        }
    }
    if topo.len() != nodes.len() {
        return Err(PlanError::Cycle {
            cycle: find_cycle(&nodes),
        });
    }
    Ok(PlanDAG { nodes, topo })
}

/// Walk the graph to list one concrete cycle for the diagnostic.
fn find_cycle(nodes: &BTreeMap<NodeId, PlanNode>) -> Vec<NodeId> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    fn visit(
        id: &NodeId,
        nodes: &BTreeMap<NodeId, PlanNode>,
        marks: &mut BTreeMap<NodeId, Mark>,
        stack: &mut Vec<NodeId>,
    ) -> Option<Vec<NodeId>> {
        marks.insert(id.clone(), Mark::Grey);
        stack.push(id.clone());
        for dep in &nodes[id].deps {
            match marks.get(dep).copied().unwrap_or(Mark::White) {
                Mark::Grey => {
                    let start = stack.iter().position(|n| n == dep).expect("on stack");
                    let mut cycle: Vec<NodeId> = stack[start..].to_vec();
                    cycle.push(dep.clone());
                    return Some(cycle);
                }
                Mark::White => {
                    if let Some(cycle) = visit(dep, nodes, marks, stack) {
                        return Some(cycle);
                    }
                }
                Mark::Black => {}
            }
        }
        stack.pop();
        marks.insert(id.clone(), Mark::Black);
        None
    }

    let mut marks = BTreeMap::new();
    let mut stack = Vec::new();
    for id in nodes.keys() {
        if marks.get(id).copied().unwrap_or(Mark::White) == Mark::White {
            if let Some(cycle) = visit(id, nodes, &mut marks, &mut stack) {
                return cycle;
            }
        }
    }
    Vec::new()
}
