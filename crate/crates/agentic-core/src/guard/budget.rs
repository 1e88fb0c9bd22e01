//! The token-budget controller.
//!
//! Consumption is a hard constraint: no code path increments spend past the
//! budget. The multiplier follows a piecewise-linear schedule in the
//! consumption ratio, zero while the budget is slack and rising to its
//! maximum as consumption reaches the cap.

use crate::kernel::ReasoningBias;
use serde::{Deserialize, Serialize};

/// Raised when a spend would push consumption past the budget. The episode
/// terminates with a budget-exhausted status; the overspend never happens.
#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("token budget exhausted: consumed {consumed} + spend {attempted} exceeds budget {budget}")]
pub struct BudgetExhausted {
    pub budget: u64,
    pub consumed: u64,
    pub attempted: u64,
}

/// Budget controller state. Functional updates: `spend` returns the
/// successor state and never mutates in place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetState {
    budget: u64,
    consumed: u64,
    lambda: f64,
    threshold_rho: f64,
    lambda_max: f64,
}

impl BudgetState {
    /// Fresh state with the default schedule (ρ = 0.8, λ_max = 1.0).
    pub fn new(budget: u64) -> BudgetState {
        assert!(budget > 0, "budget must be positive");
        BudgetState {
            budget,
            consumed: 0,
            lambda: 0.0,
            threshold_rho: 0.8,
            lambda_max: 1.0,
        }
    }

    /// Override the schedule parameters. `rho` must lie in (0, 1) and
    /// `lambda_max` must be positive.
    pub fn with_schedule(mut self, rho: f64, lambda_max: f64) -> BudgetState {
        assert!(rho > 0.0 && rho < 1.0, "rho must be in (0, 1)");
        assert!(lambda_max > 0.0, "lambda_max must be positive");
        self.threshold_rho = rho;
        self.lambda_max = lambda_max;
        self.lambda = schedule(self.ratio(), rho, lambda_max);
        self
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn threshold_rho(&self) -> f64 {
        self.threshold_rho
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.consumed
    }

    fn ratio(&self) -> f64 {
        self.consumed as f64 / self.budget as f64
    }

    /// Charge `tokens` against the budget and recompute the multiplier.
    ///
    /// Callers must pre-check via [`BudgetState::remaining`]; a spend past
    /// the budget is refused and nothing changes.
    pub fn spend(&self, tokens: u64) -> Result<BudgetState, BudgetExhausted> {
        if tokens > self.remaining() {
            return Err(BudgetExhausted {
                budget: self.budget,
                consumed: self.consumed,
                attempted: tokens,
            });
        }
        let mut next = *self;
        next.consumed += tokens;
        next.lambda = schedule(next.ratio(), self.threshold_rho, self.lambda_max);
        Ok(next)
    }

    /// Effort level the reasoning policy should run at: expansive while the
    /// multiplier is zero, neutral below λ_max/2, terse beyond.
    pub fn reasoning_bias(&self) -> ReasoningBias {
        if self.lambda == 0.0 {
            ReasoningBias::Expansive
        } else if self.lambda < self.lambda_max / 2.0 {
            ReasoningBias::Neutral
        } else {
            ReasoningBias::Terse
        }
    }

    /// Post-episode consistency report over the controller's invariants.
    pub fn kkt_report(&self) -> KktReport {
        let binding = self.ratio() > self.threshold_rho;
        KktReport {
            budget: self.budget,
            consumed: self.consumed,
            lambda: self.lambda,
            primal_feasible: self.consumed <= self.budget,
            dual_feasible: self.lambda >= 0.0,
            // Operational complementary slackness: the multiplier is
            // positive exactly when consumption is past the threshold.
            complementary_slackness: (self.lambda > 0.0) == binding,
        }
    }
}

/// λ = 0 while C/B ≤ ρ; λ = λ_max·(C/B − ρ)/(1 − ρ) beyond.
fn schedule(ratio: f64, rho: f64, lambda_max: f64) -> f64 {
    if ratio <= rho {
        0.0
    } else {
        lambda_max * (ratio - rho) / (1.0 - rho)
    }
}

/// Verdict on the controller's feasibility and slackness conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub budget: u64,
    pub consumed: u64,
    pub lambda: f64,
    /// C ≤ B.
    pub primal_feasible: bool,
    /// λ ≥ 0.
    pub dual_feasible: bool,
    /// λ > 0 exactly when C/B exceeds the threshold.
    pub complementary_slackness: bool,
}

impl KktReport {
    pub fn all_pass(&self) -> bool {
        self.primal_feasible && self.dual_feasible && self.complementary_slackness
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_zero_while_slack() {
        let state = BudgetState::new(1000).spend(500).unwrap();
        assert_eq!(state.lambda(), 0.0);
        assert_eq!(state.reasoning_bias(), ReasoningBias::Expansive);
    }

    #[test]
    fn lambda_rises_past_threshold() {
        // (0.9 - 0.8) / 0.2 = 0.5 with lambda_max 1.
        let state = BudgetState::new(1000).spend(900).unwrap();
        assert!((state.lambda() - 0.5).abs() < 1e-12);
        assert_eq!(state.reasoning_bias(), ReasoningBias::Terse);
    }

    #[test]
    fn lambda_hits_max_at_full_consumption_and_next_spend_fails() {
        let state = BudgetState::new(1000).spend(1000).unwrap();
        assert!((state.lambda() - 1.0).abs() < 1e-12);
        let err = state.spend(1).unwrap_err();
        assert_eq!(err.consumed, 1000);
        // The failed spend changed nothing.
        assert_eq!(state.consumed(), 1000);
    }

    #[test]
    fn neutral_band() {
        // 0.85 ratio: lambda = 0.25 = lambda_max / 4 -> neutral.
        let state = BudgetState::new(1000).spend(850).unwrap();
        assert!((state.lambda() - 0.25).abs() < 1e-12);
        assert_eq!(state.reasoning_bias(), ReasoningBias::Neutral);
    }

    #[test]
    fn kkt_report_passes_on_slack_budget() {
        let state = BudgetState::new(1000).spend(500).unwrap();
        assert!(state.kkt_report().all_pass());
    }

    #[test]
    fn kkt_report_passes_at_the_boundary() {
        let state = BudgetState::new(1000).spend(1000).unwrap();
        let report = state.kkt_report();
        assert!(report.all_pass());
        assert!((report.lambda - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kkt_report_detects_schedule_violation() {
        // Hand-built inconsistent state: consumption past the threshold
        // with a zero multiplier. The slackness check must fail.
        let state = BudgetState {
            budget: 1000,
            consumed: 900,
            lambda: 0.0,
            threshold_rho: 0.8,
            lambda_max: 1.0,
        };
        let report = state.kkt_report();
        assert!(report.primal_feasible);
        assert!(report.dual_feasible);
        assert!(!report.complementary_slackness);
        assert!(!report.all_pass());
    }
}
