//! Verifier filtering and the supervised fine-tuning step.

use super::{ToyPolicy, TrajectorySample, Verifier};
use thiserror::Error;

/// Raised when a fine-tuning step receives nothing to learn from.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("fine-tuning dataset is empty")]
pub struct EmptyDataset;

/// Keep exactly the samples the verifier accepts, in order, marking them
/// verified. The output is the self-purified dataset.
pub fn star_filter(samples: Vec<TrajectorySample>, verifier: &Verifier) -> Vec<TrajectorySample> {
    samples
        .into_iter()
        .filter(|s| verifier.check(&s.trajectory))
        .map(|mut s| {
            s.verified = true;
            s
        })
        .collect()
}

/// Negative log-likelihood of the dataset's (features, action) steps under
/// the policy: `−Σ log π(a | x)`.
pub fn nll_loss(policy: &ToyPolicy, dataset: &[TrajectorySample]) -> f64 {
    dataset
        .iter()
        .flat_map(|s| &s.steps)
        .map(|step| -policy.log_prob(&step.features, step.action))
        .sum()
}

/// One full-batch gradient descent step on the dataset NLL. Returns the
/// updated policy version; the input version is untouched.
pub fn sft_update(
    policy: &ToyPolicy,
    dataset: &[TrajectorySample],
    learning_rate: f64,
) -> Result<ToyPolicy, EmptyDataset> {
    assert!(learning_rate >= 0.0);
    if dataset.iter().all(|s| s.steps.is_empty()) {
        return Err(EmptyDataset);
    }
    let mut grad = vec![0.0; policy.theta.len()];
    for sample in dataset {
        for step in &sample.steps {
            // ∇(−log π) = −∇log π.
            for (i, g) in policy.grad_log_prob(&step.features, step.action).iter().enumerate() {
                grad[i] -= g;
            }
        }
    }
    let mut next = policy.clone();
    for (theta, g) in next.theta.iter_mut().zip(&grad) {
        *theta -= learning_rate * g;
    }
    Ok(next)
}
