//! The toy differentiable policy: a linear softmax over context features.
//!
//! One parameter block plays both the reasoning-kind and tool-selection
//! roles; the factorized loop structure lives in the kernel. Updates are
//! functional: a policy version is immutable and an update produces a new
//! version.

use serde::{Deserialize, Serialize};
use std::path::Path;

/// Linear softmax policy: `score(a) = Σ_f θ[f][a]·x[f]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    /// Row-major `[n_features × n_actions]`.
    pub theta: Vec<f64>,
    pub n_features: usize,
    pub n_actions: usize,
}

impl ToyPolicy {
    pub fn zeros(n_features: usize, n_actions: usize) -> ToyPolicy {
        ToyPolicy {
            theta: vec![0.0; n_features * n_actions],
            n_features,
            n_actions,
        }
    }

    /// Small random initialization, deterministic under seed.
    pub fn random_init(n_features: usize, n_actions: usize, seed: u64) -> ToyPolicy {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let theta = (0..n_features * n_actions)
            .map(|_| rng.random_range(-0.05..0.05))
            .collect();
        ToyPolicy {
            theta,
            n_features,
            n_actions,
        }
    }

    pub fn param(&self, feature: usize, action: usize) -> f64 {
        self.theta[feature * self.n_actions + action]
    }

    pub fn param_mut(&mut self, feature: usize, action: usize) -> &mut f64 {
        &mut self.theta[feature * self.n_actions + action]
    }

    pub fn scores(&self, features: &[f64]) -> Vec<f64> {
        assert_eq!(features.len(), self.n_features);
        let mut scores = vec![0.0; self.n_actions];
        for (f, x) in features.iter().enumerate() {
            if *x == 0.0 {
                continue;
            }
            for (a, score) in scores.iter_mut().enumerate() {
                *score += x * self.param(f, a);
            }
        }
        scores
    }

    pub fn probs(&self, features: &[f64]) -> Vec<f64> {
        let scores = self.scores(features);
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }

    pub fn log_prob(&self, features: &[f64], action: usize) -> f64 {
        self.probs(features)[action].max(f64::MIN_POSITIVE).ln()
    }

    /// Sample an action index with a uniform draw in [0, 1).
    pub fn sample(&self, features: &[f64], draw: f64) -> usize {
        let probs = self.probs(features);
        let mut acc = 0.0;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if draw < acc {
                return a;
            }
        }
        self.n_actions - 1
    }

    /// ∇_θ log π(action | features), flattened like `theta`:
    /// x ⊗ (onehot(action) − p).
    pub fn grad_log_prob(&self, features: &[f64], action: usize) -> Vec<f64> {
        let probs = self.probs(features);
        let mut grad = vec![0.0; self.theta.len()];
        for (f, x) in features.iter().enumerate() {
            if *x == 0.0 {
                continue;
            }
            for (a, p) in probs.iter().enumerate() {
                let indicator = if a == action { 1.0 } else { 0.0 };
                grad[f * self.n_actions + a] = x * (indicator - p);
            }
        }
        grad
    }

    pub fn save_to(&self, path: &Path, env_fingerprint: &str) -> std::io::Result<()> {
        let checkpoint = PolicyCheckpoint {
            theta: self.theta.clone(),
            n_features: self.n_features,
            n_actions: self.n_actions,
            env_fingerprint: env_fingerprint.to_string(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&checkpoint)?)
    }

    pub fn load_from(path: &Path) -> std::io::Result<(ToyPolicy, String)> {
        let text = std::fs::read_to_string(path)?;
        let checkpoint: PolicyCheckpoint = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok((
            ToyPolicy {
                theta: checkpoint.theta,
                n_features: checkpoint.n_features,
                n_actions: checkpoint.n_actions,
            },
            checkpoint.env_fingerprint,
        ))
    }
}

/// Versioned parameter file with the environment fingerprint it was
/// trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub theta: Vec<f64>,
    pub n_features: usize,
    pub n_actions: usize,
    pub env_fingerprint: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probs_sum_to_one() {
        let policy = ToyPolicy::random_init(3, 4, 9);
        let p = policy.probs(&[1.0, 0.5, -0.2]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|x| *x > 0.0));
    }

    #[test]
    fn grad_log_prob_matches_finite_differences() {
        let policy = ToyPolicy::random_init(2, 3, 4);
        let features = [1.0, -0.7];
        let action = 1;
        let analytic = policy.grad_log_prob(&features, action);
        let eps = 1e-6;
        for f in 0..2 {
            for a in 0..3 {
                let mut plus = policy.clone();
                *plus.param_mut(f, a) += eps;
                let mut minus = policy.clone();
                *minus.param_mut(f, a) -= eps;
                let fd = (plus.log_prob(&features, action) - minus.log_prob(&features, action))
                    / (2.0 * eps);
                let idx = f * 3 + a;
                assert!(
                    (analytic[idx] - fd).abs() < 1e-6,
                    "grad mismatch at ({f},{a}): {} vs {fd}",
                    analytic[idx]
                );
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_in_the_draw() {
        let policy = ToyPolicy::random_init(2, 4, 7);
        let features = [1.0, 1.0];
        assert_eq!(policy.sample(&features, 0.3), policy.sample(&features, 0.3));
        // Every action has positive probability, so draw 0 is action 0.
        assert_eq!(policy.sample(&features, 0.0), 0);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let policy = ToyPolicy::random_init(3, 2, 11);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        policy.save_to(&path, "env:test:1").unwrap();
        let (loaded, fingerprint) = ToyPolicy::load_from(&path).unwrap();
        assert_eq!(loaded, policy);
        assert_eq!(fingerprint, "env:test:1");
    }
}
