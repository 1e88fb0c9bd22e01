//! Event-driven DAG execution with optional speculation.
//!
//! The engine plans on a millisecond timeline: ready nodes start together,
//! completions are processed in time order, and the clock either jumps
//! (virtual) or sleeps (real) between events. Scheduling decisions depend
//! only on configured latencies, so results are identical under both
//! clocks.
//!
//! With speculation enabled, a dispatched tool call's predicted output is
//! available to dependents immediately; reason nodes compute ahead on it
//! and tool nodes defer their dispatch. When the actual output arrives the
//! branch commits (the lookahead becomes real, deferred calls dispatch) or
//! rolls back (the lookahead is discarded wholesale and execution
//! regenerates from the actual output). Rolled-back lookaheads never touch
//! a tool server.

use super::speculate::{BranchStatus, Matcher, OutputPredictor};
use super::{Clock, NodeId, NodePayload, PlanDAG};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

/// A node-level failure reported by the runner.
#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("{message}")]
pub struct NodeFault {
    pub message: String,
}

impl NodeFault {
    pub fn new(message: impl Into<String>) -> NodeFault {
        NodeFault {
            message: message.into(),
        }
    }
}

/// Executes one node's work given its dependencies' outputs.
///
/// Must be deterministic in `(node, inputs)`. Reason nodes may be invoked
/// speculatively (they are pure); tool nodes are invoked exactly once, at
/// dispatch time, and never from a rolled-back lookahead.
pub trait NodeRunner {
    fn run(
        &mut self,
        node: &super::PlanNode,
        inputs: &BTreeMap<NodeId, Value>,
    ) -> Result<Value, NodeFault>;
}

/// Speculation switches for one execution.
pub struct SpeculationConfig<'a> {
    pub enabled: bool,
    pub max_depth: usize,
    pub predictor: Option<&'a dyn OutputPredictor>,
    pub matcher: Matcher,
}

impl<'a> SpeculationConfig<'a> {
    pub fn off() -> SpeculationConfig<'a> {
        SpeculationConfig {
            enabled: false,
            max_depth: super::MAX_SPECULATION_DEPTH,
            predictor: None,
            matcher: Matcher::exact(),
        }
    }

    pub fn on(predictor: &'a dyn OutputPredictor, matcher: Matcher) -> SpeculationConfig<'a> {
        SpeculationConfig {
            enabled: true,
            max_depth: super::MAX_SPECULATION_DEPTH,
            predictor: Some(predictor),
            matcher,
        }
    }
}

/// One scheduling event in the execution trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub event: TraceEventKind,
    pub node: NodeId,
    pub virtual_time: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEventKind {
    Start,
    Finish,
    Speculate,
    Commit,
    Rollback,
    Evict,
}

/// The semantic result of an execution: per-node outputs and the failure
/// set. Timing and speculation statistics live in [`ExecutionReport`];
/// byte-identity across speculation modes is defined over this struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub outputs: BTreeMap<NodeId, Value>,
    pub failures: BTreeMap<NodeId, String>,
    /// Nodes skipped because an ancestor failed, mapped to that ancestor.
    pub aborted: BTreeMap<NodeId, NodeId>,
}

/// Speculation counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecStats {
    pub branches: u64,
    pub commits: u64,
    pub rollbacks: u64,
}

/// Execution result plus timing, trace, and speculation statistics.
#[derive(Debug, Clone)]
pub struct ExecutionReport {
    pub result: ExecutionResult,
    pub makespan_ms: u64,
    pub trace: Vec<TraceEvent>,
    pub speculation: SpecStats,
}

#[derive(Debug, Clone, PartialEq)]
enum NState {
    Pending,
    /// Real execution in flight; the value was computed at dispatch and
    /// materializes at `finish`.
    Running { finish: u64, generation: u64 },
    /// Tool call dispatched with an open branch predicting its output.
    SpecDispatched { branch: usize },
    /// Reason node computing ahead inside open branches.
    SpecRunning {
        ctx: BTreeSet<usize>,
        finish: u64,
        generation: u64,
    },
    /// Speculative computation complete, buffered until its branches
    /// resolve.
    SpecDone { ctx: BTreeSet<usize>, finish: u64 },
    /// Tool call inside a lookahead with a nested prediction of its own;
    /// dispatch deferred until `ctx` commits.
    SpecPredicted { branch: usize, ctx: BTreeSet<usize> },
    /// Tool call inside a lookahead without a prediction; dependents wait.
    Deferred { ctx: BTreeSet<usize> },
    Done { finish: u64 },
    Failed { finish: u64 },
    Aborted,
}

#[derive(Debug)]
struct Branch {
    node: NodeId,
    prediction: Value,
    depth: usize,
    status: BranchStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    Finish { node: NodeId, generation: u64 },
    SpecFinish { node: NodeId, generation: u64 },
    Resolve { branch: usize },
}

struct Engine<'a> {
    dag: &'a PlanDAG,
    runner: &'a mut dyn NodeRunner,
    spec: SpeculationConfig<'a>,
    states: BTreeMap<NodeId, NState>,
    generations: BTreeMap<NodeId, u64>,
    outputs: BTreeMap<NodeId, Value>,
    failures: BTreeMap<NodeId, String>,
    aborted: BTreeMap<NodeId, NodeId>,
    /// Value computed at dispatch, realized at the finish event.
    pending: BTreeMap<NodeId, Result<Value, NodeFault>>,
    /// Buffered speculative values.
    spec_values: BTreeMap<NodeId, Value>,
    /// Actual tool results awaiting branch resolution.
    actuals: BTreeMap<usize, Result<Value, NodeFault>>,
    branches: Vec<Branch>,
    queue: BinaryHeap<std::cmp::Reverse<(u64, u64, Ev)>>,
    seq: u64,
    trace: Vec<TraceEvent>,
    stats: SpecStats,
    makespan: u64,
}

/// Execute a validated DAG against a runner under the given clock.
///
/// A node starts only after all dependencies complete (or, under an open
/// speculation branch, become speculatively available); independent nodes
/// run concurrently on the timeline. Node failures abort their dependents
/// while independent subgraphs run to completion.
pub fn execute_dag(
    dag: &PlanDAG,
    runner: &mut dyn NodeRunner,
    clock: &mut dyn Clock,
    speculation: SpeculationConfig<'_>,
) -> ExecutionReport {
    let mut engine = Engine {
        states: dag
            .topo_order()
            .iter()
            .map(|id| (id.clone(), NState::Pending))
            .collect(),
        generations: dag.topo_order().iter().map(|id| (id.clone(), 0)).collect(),
        dag,
        runner,
        spec: speculation,
        outputs: BTreeMap::new(),
        failures: BTreeMap::new(),
        aborted: BTreeMap::new(),
        pending: BTreeMap::new(),
        spec_values: BTreeMap::new(),
        actuals: BTreeMap::new(),
        branches: Vec::new(),
        queue: BinaryHeap::new(),
        seq: 0,
        trace: Vec::new(),
        stats: SpecStats::default(),
        makespan: 0,
    };
    engine.scan(clock.now_ms());
    while let Some(std::cmp::Reverse((t, _, ev))) = engine.queue.pop() {
        clock.advance_to(t);
        engine.handle(ev, t);
        engine.scan(t);
    }
    ExecutionReport {
        result: ExecutionResult {
            outputs: engine.outputs,
            failures: engine.failures,
            aborted: engine.aborted,
        },
        makespan_ms: engine.makespan,
        trace: engine.trace,
        speculation: engine.stats,
    }
}

impl<'a> Engine<'a> {
    fn push_event(&mut self, t: u64, ev: Ev) {
        self.queue.push(std::cmp::Reverse((t, self.seq, ev)));
        self.seq += 1;
    }

    fn emit(&mut self, event: TraceEventKind, node: &NodeId, t: u64) {
        self.trace.push(TraceEvent {
            event,
            node: node.clone(),
            virtual_time: t,
        });
    }

    /// A dependency's value as visible to a starting node: real outputs,
    /// or buffered speculative values under open branches.
    fn dep_value(&self, dep: &NodeId) -> Option<(Value, BTreeSet<usize>)> {
        match &self.states[dep] {
            NState::Done { .. } => Some((self.outputs[dep].clone(), BTreeSet::new())),
            NState::SpecDispatched { branch } if self.open(*branch) => Some((
                self.branches[*branch].prediction.clone(),
                BTreeSet::from([*branch]),
            )),
            NState::SpecDone { ctx, .. } if ctx.iter().all(|b| self.open(*b)) => {
                Some((self.spec_values[dep].clone(), ctx.clone()))
            }
            NState::SpecPredicted { branch, ctx } if self.open(*branch) => {
                let mut all = ctx.clone();
                all.insert(*branch);
                Some((self.branches[*branch].prediction.clone(), all))
            }
            _ => None,
        }
    }

    fn open(&self, branch: usize) -> bool {
        self.branches[branch].status == BranchStatus::Open
    }

    /// Start every pending node whose dependencies are available at `t`.
    fn scan(&mut self, t: u64) {
        loop {
            let mut started = false;
            for id in self.dag.topo_order().to_vec() {
                if self.states[&id] != NState::Pending {
                    continue;
                }
                let node = self.dag.node(&id).clone();
                let mut inputs = BTreeMap::new();
                let mut ctx: BTreeSet<usize> = BTreeSet::new();
                let mut available = true;
                for dep in &node.deps {
                    match self.dep_value(dep) {
                        Some((value, dep_ctx)) => {
                            inputs.insert(dep.clone(), value);
                            ctx.extend(dep_ctx);
                        }
                        None => {
                            available = false;
                            break;
                        }
                    }
                }
                if !available {
                    continue;
                }
                self.start_node(&id, inputs, ctx, t);
                started = true;
            }
            if !started {
                break;
            }
        }
    }

    fn start_node(
        &mut self,
        id: &NodeId,
        inputs: BTreeMap<NodeId, Value>,
        ctx: BTreeSet<usize>,
        t: u64,
    ) {
        let node = self.dag.node(id).clone();
        let generation = {
            let g = self.generations.get_mut(id).expect("known node");
            *g += 1;
            *g
        };

        if ctx.is_empty() {
            // Real execution: dispatch now, materialize at finish.
            let value = self.runner.run(&node, &inputs);
            self.emit(TraceEventKind::Start, id, t);
            let finish = t + node.latency_ms;
            if node.payload.is_tool_call() && self.spec.enabled {
                if let Some(prediction) = self.predict(&node, &inputs) {
                    let branch = self.open_branch(id.clone(), prediction, 1, t);
                    self.actuals.insert(branch, value);
                    self.states
                        .insert(id.clone(), NState::SpecDispatched { branch });
                    self.push_event(finish, Ev::Resolve { branch });
                    return;
                }
            }
            self.pending.insert(id.clone(), value);
            self.states
                .insert(id.clone(), NState::Running { finish, generation });
            self.push_event(finish, Ev::Finish {
                node: id.clone(),
                generation,
            });
        } else if node.payload.is_tool_call() {
            // Side effects are buffered: the dispatch waits for the
            // context to commit. A nested prediction lets dependents
            // continue under a child branch.
            let depth = 1 + ctx
                .iter()
                .map(|b| self.branches[*b].depth)
                .max()
                .unwrap_or(0);
            if self.spec.enabled && depth <= self.spec.max_depth {
                if let Some(prediction) = self.predict(&node, &inputs) {
                    let branch = self.open_branch(id.clone(), prediction, depth, t);
                    self.states
                        .insert(id.clone(), NState::SpecPredicted { branch, ctx });
                    return;
                }
            }
            self.states.insert(id.clone(), NState::Deferred { ctx });
        } else {
            // Reason nodes are pure; compute ahead on the speculative
            // inputs.
            match self.runner.run(&node, &inputs) {
                Ok(value) => {
                    self.emit(TraceEventKind::Start, id, t);
                    let finish = t + node.latency_ms;
                    self.spec_values.insert(id.clone(), value);
                    self.states.insert(
                        id.clone(),
                        NState::SpecRunning {
                            ctx,
                            finish,
                            generation,
                        },
                    );
                    self.push_event(finish, Ev::SpecFinish {
                        node: id.clone(),
                        generation,
                    });
                }
                Err(_) => {
                    // Leave pending; the real run after commit will
                    // surface the same deterministic failure.
                }
            }
        }
    }

    fn predict(
        &mut self,
        node: &super::PlanNode,
        inputs: &BTreeMap<NodeId, Value>,
    ) -> Option<Value> {
        let NodePayload::ToolCall {
            tool_name,
            arguments,
            ..
        } = &node.payload
        else {
            return None;
        };
        let rendered = render_arguments(arguments, inputs);
        self.spec.predictor?.predict(tool_name, &rendered)
    }

    fn open_branch(&mut self, node: NodeId, prediction: Value, depth: usize, t: u64) -> usize {
        self.stats.branches += 1;
        self.emit(TraceEventKind::Speculate, &node, t);
        self.branches.push(Branch {
            node,
            prediction,
            depth,
            status: BranchStatus::Open,
        });
        self.branches.len() - 1
    }

    fn handle(&mut self, ev: Ev, t: u64) {
        match ev {
            Ev::Finish { node, generation } => {
                let NState::Running {
                    finish,
                    generation: g,
                } = self.states[&node].clone()
                else {
                    return;
                };
                if g != generation {
                    return;
                }
                debug_assert_eq!(finish, t);
                match self.pending.remove(&node).expect("pending value") {
                    Ok(value) => {
                        self.outputs.insert(node.clone(), value);
                        self.states.insert(node.clone(), NState::Done { finish: t });
                    }
                    Err(fault) => {
                        self.failures.insert(node.clone(), fault.message.clone());
                        self.states
                            .insert(node.clone(), NState::Failed { finish: t });
                        self.abort_dependents(&node);
                    }
                }
                self.makespan = self.makespan.max(t);
                self.emit(TraceEventKind::Finish, &node, t);
            }
            Ev::SpecFinish { node, generation } => {
                let NState::SpecRunning {
                    ctx,
                    finish,
                    generation: g,
                } = self.states[&node].clone()
                else {
                    return;
                };
                if g != generation {
                    return;
                }
                self.states
                    .insert(node, NState::SpecDone { ctx, finish });
            }
            Ev::Resolve { branch } => self.resolve_branch(branch, t),
        }
    }

    fn resolve_branch(&mut self, branch: usize, t: u64) {
        debug_assert_eq!(self.branches[branch].status, BranchStatus::Open);
        let node = self.branches[branch].node.clone();
        let actual = self.actuals.remove(&branch).expect("dispatched branch");
        let tool_name = match &self.dag.node(&node).payload {
            NodePayload::ToolCall { tool_name, .. } => tool_name.clone(),
            NodePayload::Reason { .. } => unreachable!("branches wrap tool calls"),
        };

        let committed = match &actual {
            Ok(value) => self
                .spec
                .matcher
                .matches(&tool_name, &self.branches[branch].prediction, value),
            Err(_) => false,
        };

        if committed {
            self.branches[branch].status = BranchStatus::Committed;
            self.stats.commits += 1;
            self.emit(TraceEventKind::Commit, &node, t);
        } else {
            self.rollback(branch, t);
        }

        // The pending call itself resolved either way: its actual result
        // is real.
        match actual {
            Ok(value) => {
                self.outputs.insert(node.clone(), value);
                self.states.insert(node.clone(), NState::Done { finish: t });
                self.makespan = self.makespan.max(t);
                self.emit(TraceEventKind::Finish, &node, t);
            }
            Err(fault) => {
                self.failures.insert(node.clone(), fault.message.clone());
                self.states.insert(node.clone(), NState::Failed { finish: t });
                self.makespan = self.makespan.max(t);
                self.emit(TraceEventKind::Finish, &node, t);
                self.abort_dependents(&node);
            }
        }

        if committed {
            self.materialize_committed(branch, t);
        }
    }

    /// On commit, buffered lookahead under the branch becomes real:
    /// completed speculative nodes materialize (not before the commit
    /// time), and deferred tool calls dispatch now.
    fn materialize_committed(&mut self, branch: usize, t: u64) {
        for id in self.dag.topo_order().to_vec() {
            match self.states[&id].clone() {
                NState::SpecRunning {
                    mut ctx,
                    finish,
                    generation,
                } if ctx.contains(&branch) => {
                    ctx.remove(&branch);
                    if ctx.is_empty() {
                        // Started early and legitimately; continues to its
                        // own finish time, which is past the commit. The
                        // queued speculative completion is superseded by a
                        // real one under a fresh generation.
                        let _ = generation;
                        let generation = {
                            let g = self.generations.get_mut(&id).expect("known node");
                            *g += 1;
                            *g
                        };
                        self.pending
                            .insert(id.clone(), Ok(self.spec_values[&id].clone()));
                        self.states
                            .insert(id.clone(), NState::Running { finish, generation });
                        self.push_event(finish, Ev::Finish {
                            node: id.clone(),
                            generation,
                        });
                    } else {
                        self.states.insert(
                            id.clone(),
                            NState::SpecRunning {
                                ctx,
                                finish,
                                generation,
                            },
                        );
                    }
                }
                NState::SpecDone { mut ctx, finish } if ctx.contains(&branch) => {
                    ctx.remove(&branch);
                    if ctx.is_empty() {
                        let finish = finish.max(t);
                        let value = self.spec_values.remove(&id).expect("buffered value");
                        self.outputs.insert(id.clone(), value);
                        self.states.insert(id.clone(), NState::Done { finish });
                        self.makespan = self.makespan.max(finish);
                        self.emit(TraceEventKind::Finish, &id, finish);
                    } else {
                        self.states
                            .insert(id.clone(), NState::SpecDone { ctx, finish });
                    }
                }
                NState::SpecPredicted {
                    branch: child,
                    mut ctx,
                } if ctx.contains(&branch) => {
                    ctx.remove(&branch);
                    if ctx.is_empty() {
                        // Deferred dispatch happens now, on commit.
                        let node = self.dag.node(&id).clone();
                        let inputs = self.committed_inputs(&id);
                        let value = self.runner.run(&node, &inputs);
                        self.emit(TraceEventKind::Start, &id, t);
                        self.actuals.insert(child, value);
                        self.states
                            .insert(id.clone(), NState::SpecDispatched { branch: child });
                        self.push_event(t + node.latency_ms, Ev::Resolve { branch: child });
                    } else {
                        self.states
                            .insert(id.clone(), NState::SpecPredicted { branch: child, ctx });
                    }
                }
                NState::Deferred { mut ctx } if ctx.contains(&branch) => {
                    ctx.remove(&branch);
                    if ctx.is_empty() {
                        self.states.insert(id.clone(), NState::Pending);
                    } else {
                        self.states.insert(id.clone(), NState::Deferred { ctx });
                    }
                }
                _ => {}
            }
        }
    }

    /// Discard a branch and everything computed under it, including child
    /// branches. Deferred calls under the branch are never dispatched.
    fn rollback(&mut self, branch: usize, t: u64) {
        let node = self.branches[branch].node.clone();
        self.branches[branch].status = BranchStatus::RolledBack;
        self.stats.rollbacks += 1;
        self.emit(TraceEventKind::Rollback, &node, t);

        loop {
            let mut progressed = false;
            for id in self.dag.topo_order().to_vec() {
                let tainted = match &self.states[&id] {
                    NState::SpecRunning { ctx, .. }
                    | NState::SpecDone { ctx, .. }
                    | NState::Deferred { ctx } => ctx.iter().any(|b| !self.open(*b)),
                    NState::SpecPredicted { branch: child, ctx } => {
                        ctx.iter().any(|b| !self.open(*b)) || !self.open(*child)
                    }
                    _ => false,
                };
                if !tainted {
                    continue;
                }
                // Cancel this node's own child branch so its subtree is
                // swept on the next pass.
                if let NState::SpecPredicted { branch: child, .. } = self.states[&id] {
                    if self.branches[child].status == BranchStatus::Open {
                        self.branches[child].status = BranchStatus::RolledBack;
                        self.stats.rollbacks += 1;
                        self.emit(TraceEventKind::Rollback, &id.clone(), t);
                    }
                }
                self.spec_values.remove(&id);
                self.states.insert(id.clone(), NState::Pending);
                *self.generations.get_mut(&id).expect("known node") += 1;
                progressed = true;
            }
            if !progressed {
                break;
            }
        }
    }

    /// Inputs for a deferred dispatch at commit time: every dependency is
    /// either real or buffered under still-open branches.
    fn committed_inputs(&self, id: &NodeId) -> BTreeMap<NodeId, Value> {
        let mut inputs = BTreeMap::new();
        for dep in &self.dag.node(id).deps {
            let (value, _) = self
                .dep_value(dep)
                .expect("dependency available at deferred dispatch");
            inputs.insert(dep.clone(), value);
        }
        inputs
    }

    fn abort_dependents(&mut self, failed: &NodeId) {
        let mut frontier = vec![failed.clone()];
        while let Some(current) = frontier.pop() {
            for dependent in self.dag.dependents(&current) {
                let dependent = dependent.clone();
                match self.states[&dependent] {
                    NState::Aborted | NState::Failed { .. } => {}
                    _ => {
                        self.states.insert(dependent.clone(), NState::Aborted);
                        self.aborted.insert(dependent.clone(), failed.clone());
                        frontier.push(dependent);
                    }
                }
            }
        }
    }
}

/// Substitute dependency outputs into tool argument templates: any string
/// value of the form `"$dep:<node-id>"` is replaced by that node's output.
pub fn render_arguments(template: &Value, inputs: &BTreeMap<NodeId, Value>) -> Value {
    match template {
        Value::String(s) => match s.strip_prefix("$dep:") {
            Some(dep) => inputs.get(dep).cloned().unwrap_or(Value::Null),
            None => template.clone(),
        },
        Value::Array(items) => {
            Value::Array(items.iter().map(|v| render_arguments(v, inputs)).collect())
        }
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), render_arguments(v, inputs)))
                .collect(),
        ),
        _ => template.clone(),
    }
}

/// Deterministic runner for reason nodes plus a pluggable tool dispatcher.
/// Reason output is a pure function of the payload text and the inputs.
pub struct FnToolRunner<F>
where
    F: FnMut(&str, &str, &Value) -> Result<Value, NodeFault>,
{
    pub dispatch: F,
}

impl<F> NodeRunner for FnToolRunner<F>
where
    F: FnMut(&str, &str, &Value) -> Result<Value, NodeFault>,
{
    fn run(
        &mut self,
        node: &super::PlanNode,
        inputs: &BTreeMap<NodeId, Value>,
    ) -> Result<Value, NodeFault> {
        match &node.payload {
            NodePayload::Reason { text } => Ok(serde_json::json!({
                "node": node.id,
                "text": text,
                "inputs": inputs,
            })),
            NodePayload::ToolCall {
                tool_alias,
                tool_name,
                arguments,
            } => {
                let rendered = render_arguments(arguments, inputs);
                (self.dispatch)(tool_alias, tool_name, &rendered)
            }
        }
    }
}
