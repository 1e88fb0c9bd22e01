//! The reason-then-act control loop.

use super::{
    EnvStep, Environment, EpisodeConfig, GeneratorError, HistoryItem, MemoryContext,
    ReasoningBias, ReasoningTrace, TerminalStatus, TraceKind, Trajectory, TrajectoryStep,
};
use crate::guard::{
    project_policy, ActionDistribution, BudgetState, ConstraintManifold, EmptyManifoldError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Samples one reasoning trace conditioned on the memory context and the
/// current effort bias.
pub trait ReasoningPolicy {
    fn propose(
        &mut self,
        context: &MemoryContext,
        bias: ReasoningBias,
    ) -> Result<ReasoningTrace, GeneratorError>;
}

/// Proposes a raw distribution over external actions conditioned on the
/// context and the same-tick reasoning trace.
pub trait ActionPolicy {
    fn propose(
        &mut self,
        context: &MemoryContext,
        trace: &ReasoningTrace,
    ) -> Result<ActionDistribution, GeneratorError>;
}

/// Fatal episode errors. Budget exhaustion is not among them: it is a
/// terminal status on the trajectory.
#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    EmptyManifold(#[from] EmptyManifoldError),
}

/// Loop strategy knobs.
#[derive(Debug, Clone)]
pub struct EpisodeOptions {
    /// Number of candidate reasoning traces sampled per tick. The default
    /// loop samples one; with more, the terse bias picks the cheapest
    /// candidate and other biases the most detailed one (ties to the
    /// earliest sample).
    pub reasoning_candidates: usize,
    /// Records injected into the context before the first tick (lesson
    /// injection); their token cost is charged to the context.
    pub preload_retrieved: Vec<crate::memory::MemoryRecord>,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        EpisodeOptions {
            reasoning_candidates: 1,
            preload_retrieved: Vec::new(),
        }
    }
}

/// The mutable pieces an episode drives: policies, manifold, and budget.
pub struct EpisodeDriver<'a> {
    pub reasoning: &'a mut dyn ReasoningPolicy,
    pub action: &'a mut dyn ActionPolicy,
    pub manifold: &'a ConstraintManifold,
    pub budget: BudgetState,
    pub options: EpisodeOptions,
}

/// Audit entry appended to the trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "audit", rename_all = "snake_case")]
pub enum AuditEvent {
    /// An action candidate was zeroed by projection, with per-predicate
    /// verdicts.
    BlockedAction {
        tick: u64,
        tool_alias: String,
        tool_name: String,
        verdicts: Vec<(String, bool)>,
    },
    /// The budget multiplier changed value after a spend.
    LambdaTransition { tick: u64, from: f64, to: f64 },
}

/// Everything an episode produces.
#[derive(Debug)]
pub struct EpisodeOutcome {
    pub trajectory: Trajectory,
    pub context: MemoryContext,
    pub audit: Vec<AuditEvent>,
    /// Multiplier value after every spend, in order.
    pub lambda_trace: Vec<f64>,
    pub final_budget: BudgetState,
    /// Tokens the generator reported for committed steps; equals
    /// `trajectory.total_tokens` by construction and is asserted in tests.
    pub consumed_tokens: u64,
}

/// Sample one reasoning trace. The first trace of an episode is always a
/// plan; later kinds are the policy's choice. The world state is never
/// touched.
pub fn reason_step(
    policy: &mut dyn ReasoningPolicy,
    context: &MemoryContext,
    bias: ReasoningBias,
) -> Result<ReasoningTrace, GeneratorError> {
    let mut trace = policy.propose(context, bias)?;
    if context.reasoning_steps() == 0 {
        trace.kind = TraceKind::Plan;
    }
    Ok(trace)
}

/// Candidates zeroed by projection, each with per-predicate verdicts.
pub type BlockedCandidates = Vec<(super::ExternalAction, Vec<(String, bool)>)>;

/// Sample an external action through the guard: the raw proposal is
/// projected onto the manifold and the result sampled with the caller's
/// RNG draw. Returns the action together with the blocked candidates seen
/// during projection (for audit logging).
pub fn action_step(
    policy: &mut dyn ActionPolicy,
    context: &MemoryContext,
    trace: &ReasoningTrace,
    manifold: &ConstraintManifold,
    draw: f64,
) -> Result<(super::ExternalAction, BlockedCandidates), EpisodeError> {
    let raw = policy.propose(context, trace)?;
    let mut blocked = Vec::new();
    for (candidate, prob) in raw.support() {
        if *prob > 0.0 {
            let verdict = manifold.admissible(candidate);
            if !verdict.admitted {
                blocked.push((candidate.clone(), verdict.verdicts));
            }
        }
    }
    let safe = project_policy(&raw, manifold)?;
    Ok((safe.sample(draw).clone(), blocked))
}

/// Run one full episode against an environment.
///
/// Each tick alternates a reasoning step and an action step; the step's
/// combined token cost is charged atomically against the budget before the
/// action is emitted, so consumption can never pass the budget. Terminates
/// on the environment's terminal signal, the horizon, or budget
/// exhaustion.
pub fn run_episode(
    driver: &mut EpisodeDriver<'_>,
    env: &mut dyn Environment,
    cfg: &EpisodeConfig,
) -> Result<EpisodeOutcome, EpisodeError> {
    assert!(cfg.horizon >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut context = MemoryContext::new();
    for record in driver.options.preload_retrieved.clone() {
        context.attach_retrieved(record);
    }
    let mut audit = Vec::new();
    let mut lambda_trace = Vec::new();
    let mut steps: Vec<TrajectoryStep> = Vec::new();
    let mut consumed_tokens = 0u64;

    let mut observation = env.reset(cfg.seed);
    context.push(HistoryItem::Observation(observation.clone()));

    let mut status = TerminalStatus::HorizonReached;
    for tick in 0..cfg.horizon as u64 {
        let bias = driver.budget.reasoning_bias();
        let trace = sample_reasoning(driver, &context, bias, tick)?;

        let draw: f64 = rng.random();
        let (action, blocked) =
            action_step(driver.action, &context, &trace, driver.manifold, draw)?;
        for (candidate, verdicts) in blocked {
            audit.push(AuditEvent::BlockedAction {
                tick,
                tool_alias: candidate.tool_alias,
                tool_name: candidate.tool_name,
                verdicts,
            });
        }

        // Atomic per-tick charge: a step that does not fit is never
        // committed, emitted, or charged.
        let step_cost = trace.token_cost + action.token_cost;
        if step_cost > driver.budget.remaining() {
            status = TerminalStatus::BudgetExhausted;
            break;
        }
        let before = driver.budget.lambda();
        driver.budget = driver
            .budget
            .spend(step_cost)
            .expect("remaining() was pre-checked");
        consumed_tokens += step_cost;
        lambda_trace.push(driver.budget.lambda());
        if driver.budget.lambda() != before {
            audit.push(AuditEvent::LambdaTransition {
                tick,
                from: before,
                to: driver.budget.lambda(),
            });
        }

        context.push(HistoryItem::Reasoning(trace.clone()));
        context.push(HistoryItem::Action(action.clone()));
        let EnvStep {
            observation: next_observation,
            reward,
            terminal,
        } = env.step(&action);

        steps.push(TrajectoryStep {
            tick,
            observation: observation.clone(),
            reasoning: trace,
            action,
            reward,
        });

        observation = next_observation;
        context.push(HistoryItem::Observation(observation.clone()));

        if terminal {
            status = TerminalStatus::EnvTerminal;
            break;
        }
    }

    let total_tokens = steps.iter().map(|s| s.token_cost()).sum();
    Ok(EpisodeOutcome {
        trajectory: Trajectory {
            steps,
            status,
            terminal_state_ref: env.state_hash(),
            final_observation: Some(observation),
            total_tokens,
        },
        context,
        audit,
        lambda_trace,
        final_budget: driver.budget,
        consumed_tokens,
    })
}

fn sample_reasoning(
    driver: &mut EpisodeDriver<'_>,
    context: &MemoryContext,
    bias: ReasoningBias,
    _tick: u64,
) -> Result<ReasoningTrace, GeneratorError> {
    let k = driver.options.reasoning_candidates.max(1);
    let mut best: Option<ReasoningTrace> = None;
    for _ in 0..k {
        let candidate = reason_step(driver.reasoning, context, bias)?;
        best = Some(match best.take() {
            None => candidate,
            Some(current) => {
                let prefer_candidate = match bias {
                    ReasoningBias::Terse => candidate.token_cost < current.token_cost,
                    _ => candidate.token_cost > current.token_cost,
                };
                if prefer_candidate {
                    candidate
                } else {
                    current
                }
            }
        });
    }
    Ok(best.expect("at least one candidate sampled"))
}

/// Scoring closure for [`TableActionPolicy`].
pub type CandidateScorer =
    Box<dyn FnMut(&MemoryContext, &ReasoningTrace, &super::ExternalAction) -> f64>;

/// Convenience: an action policy with a fixed candidate table. Scores come
/// from the wrapped closure; probabilities are the softmax of the scores.
pub struct TableActionPolicy {
    pub candidates: Vec<super::ExternalAction>,
    pub score: CandidateScorer,
}

impl ActionPolicy for TableActionPolicy {
    fn propose(
        &mut self,
        context: &MemoryContext,
        trace: &ReasoningTrace,
    ) -> Result<ActionDistribution, GeneratorError> {
        if self.candidates.is_empty() {
            return Err(GeneratorError("no action candidates".into()));
        }
        let scores: Vec<f64> = self
            .candidates
            .iter()
            .map(|c| (self.score)(context, trace, c))
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        Ok(ActionDistribution::new(
            self.candidates
                .iter()
                .cloned()
                .zip(weights.into_iter().map(|w| w / total))
                .collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guard::SafetyPredicate;
    use crate::kernel::{
        ExternalAction, MockGenerator, ScriptStep, ScriptedEnvironment, TokenGenerator,
    };
    use serde_json::json;

    struct MockReasoning(MockGenerator);

    impl ReasoningPolicy for MockReasoning {
        fn propose(
            &mut self,
            context: &MemoryContext,
            bias: ReasoningBias,
        ) -> Result<ReasoningTrace, GeneratorError> {
            let out = self.0.generate(&crate::kernel::GenRequest {
                tick: context.reasoning_steps() as u64,
                bias,
                context_len: context.history.len(),
                candidates: vec![],
            })?;
            Ok(ReasoningTrace {
                text: out.text,
                kind: TraceKind::Critique,
                token_cost: out.token_count,
            })
        }
    }

    fn act(name: &str, cost: u64) -> ExternalAction {
        ExternalAction {
            tool_alias: "srv".into(),
            tool_name: name.into(),
            arguments: json!({}),
            token_cost: cost,
        }
    }

    fn fixed_action_policy(name: &str, cost: u64) -> TableActionPolicy {
        let a = act(name, cost);
        TableActionPolicy {
            candidates: vec![a],
            score: Box::new(|_, _, _| 0.0),
        }
    }

    fn script() -> Vec<ScriptStep> {
        vec![ScriptStep::new("think about the problem", "think")]
    }

    #[test]
    fn first_trace_is_always_a_plan() {
        let mut gen = MockReasoning(MockGenerator::new(1, script()));
        let trace = reason_step(&mut gen, &MemoryContext::new(), ReasoningBias::Neutral).unwrap();
        assert_eq!(trace.kind, TraceKind::Plan);
        assert!(trace.token_cost > 0);
    }

    #[test]
    fn horizon_one_yields_one_step() {
        let mut reasoning = MockReasoning(MockGenerator::new(1, script()));
        let mut action = fixed_action_policy("get_x", 1);
        let manifold = ConstraintManifold::allow_all();
        let mut driver = EpisodeDriver {
            reasoning: &mut reasoning,
            action: &mut action,
            manifold: &manifold,
            budget: BudgetState::new(1000),
            options: EpisodeOptions::default(),
        };
        let mut env = ScriptedEnvironment::terminal_after(10);
        let outcome = run_episode(&mut driver, &mut env, &EpisodeConfig::new(1, 7)).unwrap();
        assert_eq!(outcome.trajectory.steps.len(), 1);
        assert_eq!(outcome.trajectory.status, TerminalStatus::HorizonReached);
    }

    #[test]
    fn env_terminal_dominates_horizon() {
        let mut reasoning = MockReasoning(MockGenerator::new(1, script()));
        let mut action = fixed_action_policy("get_x", 1);
        let manifold = ConstraintManifold::allow_all();
        let mut driver = EpisodeDriver {
            reasoning: &mut reasoning,
            action: &mut action,
            manifold: &manifold,
            budget: BudgetState::new(1000),
            options: EpisodeOptions::default(),
        };
        let mut env = ScriptedEnvironment::terminal_after(3);
        let outcome = run_episode(&mut driver, &mut env, &EpisodeConfig::new(10, 7)).unwrap();
        assert_eq!(outcome.trajectory.steps.len(), 3);
        assert_eq!(outcome.trajectory.status, TerminalStatus::EnvTerminal);
    }

    #[test]
    fn budget_exhaustion_is_a_terminal_status() {
        // Each step costs 6 tokens (4 reasoning + 2 action); budget 10
        // admits exactly one step.
        let mut reasoning = MockReasoning(MockGenerator::new(
            1,
            vec![ScriptStep::new("a b c d", "a b c d")],
        ));
        let mut action = fixed_action_policy("get_x", 2);
        let manifold = ConstraintManifold::allow_all();
        let mut driver = EpisodeDriver {
            reasoning: &mut reasoning,
            action: &mut action,
            manifold: &manifold,
            budget: BudgetState::new(10),
            options: EpisodeOptions::default(),
        };
        let mut env = ScriptedEnvironment::terminal_after(100);
        let outcome = run_episode(&mut driver, &mut env, &EpisodeConfig::new(10, 7)).unwrap();
        assert_eq!(outcome.trajectory.steps.len(), 1);
        assert_eq!(outcome.trajectory.status, TerminalStatus::BudgetExhausted);
        assert_eq!(outcome.trajectory.total_tokens, 6);
        assert_eq!(outcome.consumed_tokens, 6);
        assert!(outcome.final_budget.consumed() <= outcome.final_budget.budget());
    }

    #[test]
    fn think_before_act_holds_on_every_step() {
        let mut reasoning = MockReasoning(MockGenerator::new(1, script()));
        let mut action = fixed_action_policy("get_x", 1);
        let manifold = ConstraintManifold::allow_all();
        let mut driver = EpisodeDriver {
            reasoning: &mut reasoning,
            action: &mut action,
            manifold: &manifold,
            budget: BudgetState::new(1000),
            options: EpisodeOptions::default(),
        };
        let mut env = ScriptedEnvironment::terminal_after(5);
        let outcome = run_episode(&mut driver, &mut env, &EpisodeConfig::new(10, 3)).unwrap();
        for step in &outcome.trajectory.steps {
            assert!(step.reasoning.token_cost > 0);
        }
        // Token accounting matches the generator-reported consumption.
        assert_eq!(outcome.consumed_tokens, outcome.trajectory.total_tokens);
    }

    #[test]
    fn reasoning_is_inert_on_the_environment() {
        let mut env = ScriptedEnvironment::terminal_after(3);
        env.reset(0);
        let before = env.state_hash();
        let mut gen = MockReasoning(MockGenerator::new(1, script()));
        let _ = reason_step(&mut gen, &MemoryContext::new(), ReasoningBias::Neutral).unwrap();
        assert_eq!(env.state_hash(), before);
    }

    #[test]
    fn forced_choice_returns_the_single_admissible_action() {
        let mut policy = fixed_action_policy("get_only", 1);
        let manifold = ConstraintManifold::allow_all();
        let trace = ReasoningTrace {
            text: "t".into(),
            kind: TraceKind::Plan,
            token_cost: 1,
        };
        let (action, blocked) =
            action_step(&mut policy, &MemoryContext::new(), &trace, &manifold, 0.99).unwrap();
        assert_eq!(action.tool_name, "get_only");
        assert!(blocked.is_empty());
    }

    #[test]
    fn disallowed_mass_projects_away_and_is_audited() {
        let allowed = act("get_ok", 1);
        let denied = act("rm_all", 1);
        let mut policy = TableActionPolicy {
            candidates: vec![allowed.clone(), denied.clone()],
            score: Box::new(|_, _, _| 0.0),
        };
        let manifold = ConstraintManifold::new(vec![SafetyPredicate::new(
            "deny_rm",
            "denies rm_all",
            |a: &ExternalAction| a.tool_name != "rm_all",
        )]);
        let trace = ReasoningTrace {
            text: "t".into(),
            kind: TraceKind::Plan,
            token_cost: 1,
        };
        // Both draws land on the allowed action: the denied one has zero
        // projected mass.
        for draw in [0.1, 0.9] {
            let (action, blocked) =
                action_step(&mut policy, &MemoryContext::new(), &trace, &manifold, draw).unwrap();
            assert_eq!(action.tool_name, "get_ok");
            assert_eq!(blocked.len(), 1);
            assert_eq!(blocked[0].0.tool_name, "rm_all");
        }
    }

    #[test]
    fn multi_candidate_sampling_picks_by_bias() {
        // Two scripted entries of different lengths; three samples cycle
        // through them.
        let script = vec![
            ScriptStep::new("short one", "s"),
            ScriptStep::new("a much longer reasoning trace here", "l"),
        ];
        let mut reasoning = MockReasoning(MockGenerator::new(1, script.clone()));
        let mut action = fixed_action_policy("get_x", 1);
        let manifold = ConstraintManifold::allow_all();
        let mut driver = EpisodeDriver {
            reasoning: &mut reasoning,
            action: &mut action,
            manifold: &manifold,
            budget: BudgetState::new(1000),
            options: EpisodeOptions {
                reasoning_candidates: 3,
                ..EpisodeOptions::default()
            },
        };
        let mut env = ScriptedEnvironment::terminal_after(1);
        let outcome = run_episode(&mut driver, &mut env, &EpisodeConfig::new(1, 7)).unwrap();
        // Non-terse bias prefers the most detailed candidate.
        assert_eq!(
            outcome.trajectory.steps[0].reasoning.text,
            "a much longer reasoning trace here"
        );
    }

    #[test]
    fn deterministic_under_seed() {
        let run = |seed: u64| {
            let mut reasoning = MockReasoning(MockGenerator::new(9, script()));
            let mut action = fixed_action_policy("get_x", 1);
            let manifold = ConstraintManifold::allow_all();
            let mut driver = EpisodeDriver {
                reasoning: &mut reasoning,
                action: &mut action,
                manifold: &manifold,
                budget: BudgetState::new(1000),
                options: EpisodeOptions::default(),
            };
            let mut env = ScriptedEnvironment::terminal_after(4);
            let outcome =
                run_episode(&mut driver, &mut env, &EpisodeConfig::new(10, seed)).unwrap();
            serde_json::to_string(&outcome.trajectory).unwrap()
        };
        assert_eq!(run(5), run(5));
    }
}
