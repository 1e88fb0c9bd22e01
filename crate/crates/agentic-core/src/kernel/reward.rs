//! Return and reward arithmetic.

use super::Trajectory;

/// Discounted return `Σ_t γ^t r_t` over a trajectory's step rewards.
pub fn discounted_return(traj: &Trajectory, gamma: f64) -> f64 {
    assert!((0.0..1.0).contains(&gamma), "gamma must be in [0, 1)");
    let mut acc = 0.0;
    let mut weight = 1.0;
    for step in &traj.steps {
        acc += weight * step.reward;
        weight *= gamma;
    }
    acc
}

/// Composite trajectory reward: `outcome + lambda · Σ process`.
pub fn composite_reward(outcome: f64, process: &[f64], lambda: f64) -> f64 {
    assert!(lambda >= 0.0, "lambda must be nonnegative");
    outcome + lambda * process.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{
        ExternalAction, Observation, ObservationSource, ReasoningTrace, TerminalStatus, TraceKind,
        TrajectoryStep,
    };
    use serde_json::json;

    fn traj_with_rewards(rewards: &[f64]) -> Trajectory {
        let steps = rewards
            .iter()
            .enumerate()
            .map(|(i, &reward)| TrajectoryStep {
                tick: i as u64,
                observation: Observation {
                    payload: json!({}),
                    source: ObservationSource::System,
                    timestamp: i as u64,
                },
                reasoning: ReasoningTrace {
                    text: "step".into(),
                    kind: TraceKind::Plan,
                    token_cost: 1,
                },
                action: ExternalAction {
                    tool_alias: "a".into(),
                    tool_name: "t".into(),
                    arguments: json!({}),
                    token_cost: 1,
                },
                reward,
            })
            .collect::<Vec<_>>();
        let total_tokens = steps.iter().map(|s| s.token_cost()).sum();
        Trajectory {
            steps,
            status: TerminalStatus::EnvTerminal,
            terminal_state_ref: 0,
            final_observation: None,
            total_tokens,
        }
    }

    #[test]
    fn discounted_return_direct_sum() {
        // 1 + 0.5 + 0.25, computed by hand.
        let traj = traj_with_rewards(&[1.0, 1.0, 1.0]);
        assert!((discounted_return(&traj, 0.5) - 1.75).abs() < 1e-12);
    }

    #[test]
    fn gamma_zero_truncates_to_first_reward() {
        let traj = traj_with_rewards(&[3.0, 100.0, -5.0]);
        assert_eq!(discounted_return(&traj, 0.0), 3.0);
    }

    #[test]
    fn empty_trajectory_returns_zero() {
        let traj = traj_with_rewards(&[]);
        assert_eq!(discounted_return(&traj, 0.9), 0.0);
    }

    #[test]
    fn return_is_linear_in_rewards() {
        let base = [0.3, -0.7, 1.1, 0.0, 2.5];
        let scaled: Vec<f64> = base.iter().map(|r| r * 3.5).collect();
        let a = discounted_return(&traj_with_rewards(&base), 0.9);
        let b = discounted_return(&traj_with_rewards(&scaled), 0.9);
        assert!((b - 3.5 * a).abs() < 1e-12);
    }

    #[test]
    fn composite_reward_cases() {
        // lambda = 0 ablates the process term.
        assert_eq!(composite_reward(1.0, &[0.1, 0.2], 0.0), 1.0);
        // direct evaluation: 0 + 2 * (0.5 + 0.5).
        assert_eq!(composite_reward(0.0, &[0.5, 0.5], 2.0), 2.0);
        // empty process sum.
        assert_eq!(composite_reward(1.0, &[], 5.0), 1.0);
    }
}
