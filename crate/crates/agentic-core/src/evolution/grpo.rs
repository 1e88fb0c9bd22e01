//! Group-relative advantage estimation and the policy-gradient step.

use super::{ToyPolicy, TrajectorySample};
use crate::kernel::composite_reward;
use thiserror::Error;

/// Advantage estimation needs at least two trajectories to form a group
/// baseline.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("advantage estimation needs a batch of at least 2, got {0}")]
pub struct BatchTooSmall(pub usize);

/// Group-relative advantages: every step of trajectory `i` receives
/// `(return_i − mean) / std`, with the divisor floored to 1 when the
/// returns are (numerically) identical. Returns come from the composite
/// reward with process weight `lambda`.
pub fn estimate_advantages(
    mut batch: Vec<TrajectorySample>,
    lambda: f64,
) -> Result<Vec<TrajectorySample>, BatchTooSmall> {
    if batch.len() < 2 {
        return Err(BatchTooSmall(batch.len()));
    }
    let returns: Vec<f64> = batch
        .iter()
        .map(|s| composite_reward(s.outcome(), &s.process_rewards(), lambda))
        .collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let variance = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = variance.sqrt();
    let divisor = if std < 1e-8 { 1.0 } else { std };
    for (sample, ret) in batch.iter_mut().zip(&returns) {
        let advantage = (ret - mean) / divisor;
        sample.advantage_per_step = vec![advantage; sample.steps.len()];
    }
    Ok(batch)
}

/// The surrogate objective whose gradient the update ascends:
/// `(1/N) Σ_i Σ_t log π(a_t | x_t) · Â_t` with the advantages held fixed.
pub fn pg_objective(policy: &ToyPolicy, batch: &[TrajectorySample]) -> f64 {
    let n = batch.len().max(1) as f64;
    batch
        .iter()
        .map(|sample| {
            sample
                .steps
                .iter()
                .zip(&sample.advantage_per_step)
                .map(|(step, advantage)| policy.log_prob(&step.features, step.action) * advantage)
                .sum::<f64>()
        })
        .sum::<f64>()
        / n
}

/// One ascent step along `(1/N) Σ_i Σ_t ∇log π(a_t | x_t) · Â_t`.
pub fn policy_gradient_update(
    policy: &ToyPolicy,
    batch: &[TrajectorySample],
    learning_rate: f64,
) -> ToyPolicy {
    assert!(learning_rate >= 0.0);
    assert!(
        batch.iter().all(|s| s.advantage_per_step.len() == s.steps.len()),
        "advantages must be estimated before the update"
    );
    let n = batch.len().max(1) as f64;
    let mut grad = vec![0.0; policy.theta.len()];
    for sample in batch {
        for (step, advantage) in sample.steps.iter().zip(&sample.advantage_per_step) {
            for (i, g) in policy
                .grad_log_prob(&step.features, step.action)
                .iter()
                .enumerate()
            {
                grad[i] += g * advantage;
            }
        }
    }
    let mut next = policy.clone();
    for (theta, g) in next.theta.iter_mut().zip(&grad) {
        *theta += learning_rate * g / n;
    }
    next
}
