//! Stage runners for the three evolution levels.

use super::envs::ToyEnv;
use super::reflect::{inject_lessons, reflect, store_lesson};
use super::star::{sft_update, star_filter};
use super::{estimate_advantages, policy_gradient_update, Lesson, ToyPolicy, ToyStep, TrajectorySample};
use crate::guard::{BudgetState, ConstraintManifold};
use crate::kernel::{
    composite_reward, run_episode, ActionPolicy, EpisodeConfig, EpisodeDriver, EpisodeOptions,
    GenRequest, GeneratorError, MemoryContext, MockGenerator, ReasoningBias, ReasoningPolicy,
    ReasoningTrace, ScriptStep, TokenGenerator, TraceKind,
};
use crate::memory::LongTermMemory;
use crate::seed::{derive_seed, derive_seed_indexed};
use serde::{Deserialize, Serialize};

/// The three self-evolution levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvolutionLevel {
    /// Lesson reflection and injection; no parameter updates.
    InContext,
    /// Verifier filtering plus supervised fine-tuning.
    SelfTaught,
    /// Group-relative advantage policy gradient.
    Reinforcement,
}

impl EvolutionLevel {
    pub fn from_number(n: u8) -> Option<EvolutionLevel> {
        match n {
            1 => Some(EvolutionLevel::InContext),
            2 => Some(EvolutionLevel::SelfTaught),
            3 => Some(EvolutionLevel::Reinforcement),
            _ => None,
        }
    }

    pub fn number(&self) -> u8 {
        match self {
            EvolutionLevel::InContext => 1,
            EvolutionLevel::SelfTaught => 2,
            EvolutionLevel::Reinforcement => 3,
        }
    }
}

/// Stage configuration. Defaults are the desk-scale settings the
/// acceptance runs use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub seed: u64,
    /// Level-1 episode count.
    pub episodes: usize,
    /// Level-2/3 epoch count.
    pub epochs: usize,
    /// Episodes generated per epoch.
    pub batch_size: usize,
    /// Level-2 step size, scaled internally by the survivor step count
    /// (the fine-tuning loss is an unnormalized sum).
    pub sft_learning_rate: f64,
    /// Level-3 step size (the estimator is already 1/N-normalized).
    pub pg_learning_rate: f64,
    /// Process-reward weight in the composite return.
    pub reward_lambda: f64,
    /// Lessons injected per episode at level 1.
    pub lesson_k: usize,
    /// Token budget per episode.
    pub episode_budget: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            seed: 0,
            episodes: 100,
            epochs: 30,
            batch_size: 128,
            sft_learning_rate: 12.0,
            pg_learning_rate: 0.5,
            reward_lambda: 1.0,
            lesson_k: 1,
            episode_budget: 10_000,
        }
    }
}

/// Aggregates for one epoch (or one episode block at level 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    pub mean_tokens: f64,
}

/// What a stage run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionReport {
    pub level: u8,
    pub env_fingerprint: String,
    pub epochs: Vec<EpochStats>,
    /// Level 1 only: success rate over the first and second half of the
    /// episode sequence.
    pub halves: Option<(f64, f64)>,
    /// Level 1 only: number of lessons accumulated.
    pub lessons: Option<usize>,
}

impl EvolutionReport {
    /// Plain-text success-rate table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "level {} on {}\n{:>6} {:>12} {:>12} {:>12}\n",
            self.level, self.env_fingerprint, "epoch", "success", "return", "tokens"
        ));
        for e in &self.epochs {
            out.push_str(&format!(
                "{:>6} {:>12.3} {:>12.3} {:>12.1}\n",
                e.epoch, e.success_rate, e.mean_return, e.mean_tokens
            ));
        }
        if let Some((first, second)) = self.halves {
            out.push_str(&format!(
                "first half {:.3}, second half {:.3}\n",
                first, second
            ));
        }
        out
    }
}

/// Reasoning policy used by the toy stages: scripted mock generator with
/// long and short variants per step.
struct ScriptedReasoning {
    generator: MockGenerator,
}

impl ScriptedReasoning {
    fn new(seed: u64) -> ScriptedReasoning {
        ScriptedReasoning {
            generator: MockGenerator::new(
                seed,
                vec![ScriptStep::new("assess the state and choose an action", "act")],
            ),
        }
    }
}

impl ReasoningPolicy for ScriptedReasoning {
    fn propose(
        &mut self,
        context: &MemoryContext,
        bias: ReasoningBias,
    ) -> Result<ReasoningTrace, GeneratorError> {
        let out = self.generator.generate(&GenRequest {
            tick: context.reasoning_steps() as u64,
            bias,
            context_len: context.history.len(),
            candidates: Vec::new(),
        })?;
        Ok(ReasoningTrace {
            text: out.text,
            kind: TraceKind::Critique,
            token_cost: out.token_count,
        })
    }
}

/// Action policy adapter: categorical over the environment's candidate
/// table with probabilities from the toy policy, optionally conditioned
/// on an injected lesson through the feature map.
struct ToyActionAdapter<E: ToyEnv + Clone> {
    env: E,
    policy: ToyPolicy,
    lesson: Option<Lesson>,
    candidates: Vec<crate::kernel::ExternalAction>,
}

impl<E: ToyEnv + Clone> ActionPolicy for ToyActionAdapter<E> {
    fn propose(
        &mut self,
        context: &MemoryContext,
        _trace: &ReasoningTrace,
    ) -> Result<crate::guard::ActionDistribution, GeneratorError> {
        let step_index = context
            .history
            .iter()
            .filter(|h| matches!(h, crate::kernel::HistoryItem::Action(_)))
            .count();
        let features = self.env.features(step_index, self.lesson.as_ref());
        let probs = self.policy.probs(&features);
        Ok(crate::guard::ActionDistribution::new(
            self.candidates.iter().cloned().zip(probs).collect(),
        ))
    }
}

/// Run one governed episode of a toy environment under the given policy
/// and optional lesson, and assemble the sample with its feature/action
/// view.
pub fn generate_sample<E: ToyEnv + Clone>(
    env: &mut E,
    policy: &ToyPolicy,
    lesson: Option<Lesson>,
    seed: u64,
    budget: u64,
) -> TrajectorySample {
    let mut reasoning = ScriptedReasoning::new(derive_seed(seed, "reasoning"));
    let mut action = ToyActionAdapter {
        candidates: env.candidates(),
        env: env.clone(),
        policy: policy.clone(),
        lesson: lesson.clone(),
    };
    let manifold = ConstraintManifold::allow_all();
    let mut options = EpisodeOptions::default();
    if let Some(lesson) = &lesson {
        options.preload_retrieved.push(crate::memory::MemoryRecord {
            store: crate::memory::StoreKind::Semantic,
            insight: crate::memory::Insight {
                text: lesson.text.clone(),
                utility_score: 1.0,
                source_episode: lesson.source_trajectory.clone(),
                outcome: crate::memory::InsightOutcome::Failure,
            },
            embedding: lesson.embedding.clone(),
            created_at: 0,
        });
    }
    let mut driver = EpisodeDriver {
        reasoning: &mut reasoning,
        action: &mut action,
        manifold: &manifold,
        budget: BudgetState::new(budget),
        options,
    };
    let horizon = env.horizon();
    let outcome = run_episode(&mut driver, env, &EpisodeConfig::new(horizon, seed))
        .expect("toy episodes cannot fail structurally");

    let steps: Vec<ToyStep> = outcome
        .trajectory
        .steps
        .iter()
        .enumerate()
        .map(|(i, step)| {
            let action_index = env
                .action_index(&step.action)
                .expect("action came from the candidate table");
            ToyStep {
                features: env.features(i, lesson.as_ref()),
                action: action_index,
                token_cost: step.action.token_cost,
                process_reward: env.process_reward(action_index),
            }
        })
        .collect();
    TrajectorySample::new(outcome.trajectory, steps)
}

fn batch_stats(epoch: usize, batch: &[TrajectorySample], lambda: f64) -> EpochStats {
    let n = batch.len().max(1) as f64;
    let successes = batch.iter().filter(|s| s.outcome() >= 1.0).count() as f64;
    let mean_return = batch
        .iter()
        .map(|s| composite_reward(s.outcome(), &s.process_rewards(), lambda))
        .sum::<f64>()
        / n;
    let mean_tokens = batch
        .iter()
        .map(|s| s.trajectory.total_tokens as f64)
        .sum::<f64>()
        / n;
    EpochStats {
        epoch,
        success_rate: successes / n,
        mean_return,
        mean_tokens,
    }
}

/// Run one evolution stage and return the report plus the resulting
/// policy version (level 1 returns its fixed prior unchanged).
pub fn run_evolution_stage<E: ToyEnv + Clone>(
    level: EvolutionLevel,
    env: &mut E,
    config: &EvolutionConfig,
    initial_policy: Option<ToyPolicy>,
) -> (EvolutionReport, ToyPolicy) {
    match level {
        EvolutionLevel::InContext => run_level1(env, config, initial_policy),
        EvolutionLevel::SelfTaught => run_level2(env, config, initial_policy),
        EvolutionLevel::Reinforcement => run_level3(env, config, initial_policy),
    }
}

fn run_level1<E: ToyEnv + Clone>(
    env: &mut E,
    config: &EvolutionConfig,
    initial_policy: Option<ToyPolicy>,
) -> (EvolutionReport, ToyPolicy) {
    let policy = initial_policy
        .unwrap_or_else(|| ToyPolicy::zeros(env.n_features(), env.n_actions()));
    let theta_before = policy.theta.clone();
    let mut lesson_store = LongTermMemory::new();
    let verifier = env.verifier();

    let mut outcomes: Vec<bool> = Vec::with_capacity(config.episodes);
    let mut epochs = Vec::new();
    let mut block: Vec<TrajectorySample> = Vec::new();
    let block_len = (config.episodes / 10).max(1);

    for i in 0..config.episodes {
        let mut probe_context = MemoryContext::new();
        let lessons = inject_lessons(
            &mut probe_context,
            &lesson_store,
            &env.query_context(),
            config.lesson_k,
        );
        let lesson = lessons.into_iter().next();
        let sample = generate_sample(
            env,
            &policy,
            lesson,
            derive_seed_indexed(config.seed, "level1-episode", i as u64),
            config.episode_budget,
        );
        let success = verifier.check(&sample.trajectory);
        outcomes.push(success);
        if !success {
            if let Ok(lesson) = reflect(&sample.trajectory, None) {
                store_lesson(&mut lesson_store, &lesson, i as u64);
            }
        }
        block.push(sample);
        if block.len() == block_len {
            epochs.push(batch_stats(epochs.len(), &block, config.reward_lambda));
            block.clear();
        }
    }
    if !block.is_empty() {
        epochs.push(batch_stats(epochs.len(), &block, config.reward_lambda));
    }

    let half = outcomes.len() / 2;
    let rate = |xs: &[bool]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().filter(|x| **x).count() as f64 / xs.len() as f64
        }
    };
    let halves = (rate(&outcomes[..half]), rate(&outcomes[half..]));

    // Level 1 adapts through context only; the parameters are untouched.
    assert_eq!(policy.theta, theta_before);

    (
        EvolutionReport {
            level: 1,
            env_fingerprint: env.fingerprint(),
            epochs,
            halves: Some(halves),
            lessons: Some(lesson_store.len()),
        },
        policy,
    )
}

fn generate_batch<E: ToyEnv + Clone>(
    env: &mut E,
    policy: &ToyPolicy,
    config: &EvolutionConfig,
    epoch: usize,
) -> Vec<TrajectorySample> {
    (0..config.batch_size)
        .map(|i| {
            generate_sample(
                env,
                policy,
                None,
                derive_seed_indexed(
                    derive_seed_indexed(config.seed, "epoch", epoch as u64),
                    "episode",
                    i as u64,
                ),
                config.episode_budget,
            )
        })
        .collect()
}

fn run_level2<E: ToyEnv + Clone>(
    env: &mut E,
    config: &EvolutionConfig,
    initial_policy: Option<ToyPolicy>,
) -> (EvolutionReport, ToyPolicy) {
    let mut policy = initial_policy.unwrap_or_else(|| {
        ToyPolicy::random_init(
            env.n_features(),
            env.n_actions(),
            derive_seed(config.seed, "level2-init"),
        )
    });
    let verifier = env.verifier();
    let mut epochs = Vec::new();

    for epoch in 0..config.epochs {
        let batch = generate_batch(env, &policy, config, epoch);
        epochs.push(batch_stats(epoch, &batch, config.reward_lambda));
        let survivors = star_filter(batch, &verifier);
        let survivor_steps: usize = survivors.iter().map(|s| s.steps.len()).sum();
        if survivor_steps > 0 {
            let lr = config.sft_learning_rate / survivor_steps as f64;
            policy = sft_update(&policy, &survivors, lr).expect("survivors are nonempty");
        }
    }

    (
        EvolutionReport {
            level: 2,
            env_fingerprint: env.fingerprint(),
            epochs,
            halves: None,
            lessons: None,
        },
        policy,
    )
}

fn run_level3<E: ToyEnv + Clone>(
    env: &mut E,
    config: &EvolutionConfig,
    initial_policy: Option<ToyPolicy>,
) -> (EvolutionReport, ToyPolicy) {
    let mut policy = initial_policy.unwrap_or_else(|| {
        ToyPolicy::random_init(
            env.n_features(),
            env.n_actions(),
            derive_seed(config.seed, "level3-init"),
        )
    });
    let mut epochs = Vec::new();

    for epoch in 0..config.epochs {
        let batch = generate_batch(env, &policy, config, epoch);
        epochs.push(batch_stats(epoch, &batch, config.reward_lambda));
        match estimate_advantages(batch, config.reward_lambda) {
            Ok(batch) => {
                policy = policy_gradient_update(&policy, &batch, config.pg_learning_rate);
            }
            Err(_) => break,
        }
    }

    (
        EvolutionReport {
            level: 3,
            env_fingerprint: env.fingerprint(),
            epochs,
            halves: None,
            lessons: None,
        },
        policy,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{DateFormatEnv, ToolChainEnv};

    fn small_config(seed: u64) -> EvolutionConfig {
        EvolutionConfig {
            seed,
            ..EvolutionConfig::default()
        }
    }

    #[test]
    fn level1_improves_in_the_second_half() {
        let mut env = DateFormatEnv::new(21);
        let config = EvolutionConfig {
            episodes: 100,
            ..small_config(21)
        };
        let prior = env.lesson_prior_policy();
        let (report, policy) = run_evolution_stage(
            EvolutionLevel::InContext,
            &mut env,
            &config,
            Some(prior.clone()),
        );
        let (first, second) = report.halves.unwrap();
        assert!(
            second > first,
            "second half {second} must beat first half {first}"
        );
        assert_eq!(policy.theta, prior.theta, "level 1 changes no parameters");
        assert!(report.lessons.unwrap() >= 1);
    }

    #[test]
    fn level2_learns_the_tool_chain() {
        let mut env = ToolChainEnv::new(5);
        let config = small_config(5);
        let (report, policy) =
            run_evolution_stage(EvolutionLevel::SelfTaught, &mut env, &config, None);
        let last = report.epochs.last().unwrap();
        assert!(
            last.success_rate >= 0.9,
            "expected >= 0.9 success, got {} (curve: {:?})",
            last.success_rate,
            report
                .epochs
                .iter()
                .map(|e| e.success_rate)
                .collect::<Vec<_>>()
        );
        // The learned policy is usable for chaining.
        assert_eq!(policy.n_actions, env.n_actions());
    }

    #[test]
    fn level3_cuts_tokens_while_holding_success() {
        let mut env = ToolChainEnv::new(5);
        let config = small_config(5);
        let (_, checkpoint) =
            run_evolution_stage(EvolutionLevel::SelfTaught, &mut env, &config, None);
        let (report, _) = run_evolution_stage(
            EvolutionLevel::Reinforcement,
            &mut env,
            &config,
            Some(checkpoint),
        );
        let first = report.epochs.first().unwrap();
        let last = report.epochs.last().unwrap();
        assert!(
            last.mean_tokens < first.mean_tokens,
            "tokens {} -> {} must decrease",
            first.mean_tokens,
            last.mean_tokens
        );
        assert!(last.success_rate >= 0.9, "success {}", last.success_rate);
    }

    #[test]
    fn stages_are_seed_deterministic() {
        let run = || {
            let mut env = ToolChainEnv::new(3);
            let config = EvolutionConfig {
                epochs: 3,
                batch_size: 16,
                ..small_config(3)
            };
            let (report, policy) =
                run_evolution_stage(EvolutionLevel::SelfTaught, &mut env, &config, None);
            (serde_json::to_string(&report).unwrap(), policy.theta)
        };
        assert_eq!(run(), run());
    }
}

