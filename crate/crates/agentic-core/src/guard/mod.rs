//! Safety enforcement: the constraint manifold, policy projection,
//! token-level masking, and the token-budget controller.
//!
//! Unsafe actions are never generated and then filtered; they receive
//! exactly zero probability before emission.

mod budget;
mod mask;
mod predicates;
mod project;

pub use budget::{BudgetExhausted, BudgetState, KktReport};
pub use mask::{
    mask_logits, masked_softmax, AllMaskedError, AllowAllMask, DecodingState, TokenMask, TrieMask,
    MASK_SENTINEL,
};
pub use predicates::{allow_tools_predicate, read_only_predicate};
pub use project::project_policy;

use crate::kernel::ExternalAction;
use std::fmt;
use std::sync::Arc;

/// Raised when projection leaves no admissible action with positive
/// probability.
#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("constraint manifold admits no action with positive probability")]
pub struct EmptyManifoldError;

/// A pure, deterministic safety check over external actions.
#[derive(Clone)]
pub struct SafetyPredicate {
    pub id: String,
    pub description: String,
    check: Arc<dyn Fn(&ExternalAction) -> bool + Send + Sync>,
}

impl SafetyPredicate {
    pub fn new(
        id: impl Into<String>,
        description: impl Into<String>,
        check: impl Fn(&ExternalAction) -> bool + Send + Sync + 'static,
    ) -> SafetyPredicate {
        SafetyPredicate {
            id: id.into(),
            description: description.into(),
            check: Arc::new(check),
        }
    }

    pub fn check(&self, action: &ExternalAction) -> bool {
        (self.check)(action)
    }
}

impl fmt::Debug for SafetyPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SafetyPredicate")
            .field("id", &self.id)
            .field("description", &self.description)
            .finish_non_exhaustive()
    }
}

/// Per-predicate verdicts for one action, for audit logging.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Admissibility {
    pub admitted: bool,
    /// One `(predicate id, passed)` entry per predicate, in registration
    /// order.
    pub verdicts: Vec<(String, bool)>,
}

/// The conjunction of safety predicates plus a prefix-safe token mask.
/// Immutable and shareable.
#[derive(Clone)]
pub struct ConstraintManifold {
    predicates: Vec<SafetyPredicate>,
    token_mask: Arc<dyn TokenMask + Send + Sync>,
}

impl fmt::Debug for ConstraintManifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstraintManifold")
            .field("predicates", &self.predicates)
            .finish_non_exhaustive()
    }
}

impl ConstraintManifold {
    /// Manifold with the given predicates and an allow-all token mask.
    pub fn new(predicates: Vec<SafetyPredicate>) -> ConstraintManifold {
        ConstraintManifold {
            predicates,
            token_mask: Arc::new(AllowAllMask),
        }
    }

    /// Zero predicates: every action is admissible (empty conjunction).
    pub fn allow_all() -> ConstraintManifold {
        ConstraintManifold::new(Vec::new())
    }

    pub fn with_token_mask(
        mut self,
        mask: Arc<dyn TokenMask + Send + Sync>,
    ) -> ConstraintManifold {
        self.token_mask = mask;
        self
    }

    pub fn predicates(&self) -> &[SafetyPredicate] {
        &self.predicates
    }

    pub fn token_mask(&self) -> &(dyn TokenMask + Send + Sync) {
        self.token_mask.as_ref()
    }

    /// Evaluate all predicates on an action. True iff every predicate
    /// passes; the verdict list carries one entry per predicate.
    pub fn admissible(&self, action: &ExternalAction) -> Admissibility {
        let verdicts: Vec<(String, bool)> = self
            .predicates
            .iter()
            .map(|p| (p.id.clone(), p.check(action)))
            .collect();
        Admissibility {
            admitted: verdicts.iter().all(|(_, ok)| *ok),
            verdicts,
        }
    }
}

/// A finite-support distribution over external actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    support: Vec<(ExternalAction, f64)>,
}

impl ActionDistribution {
    /// Probabilities must be nonnegative and sum to 1 within 1e-9.
    pub fn new(support: Vec<(ExternalAction, f64)>) -> ActionDistribution {
        debug_assert!(support.iter().all(|(_, p)| *p >= 0.0));
        let total: f64 = support.iter().map(|(_, p)| p).sum();
        debug_assert!(
            (total - 1.0).abs() <= 1e-9,
            "action distribution must sum to 1, got {total}"
        );
        ActionDistribution { support }
    }

    pub fn support(&self) -> &[(ExternalAction, f64)] {
        &self.support
    }

    pub fn total_mass(&self) -> f64 {
        self.support.iter().map(|(_, p)| p).sum()
    }

    /// Sample an action with the given uniform draw in [0, 1).
    pub fn sample(&self, draw: f64) -> &ExternalAction {
        let mut acc = 0.0;
        for (action, p) in &self.support {
            acc += p;
            if draw < acc {
                return action;
            }
        }
        // Rounding slack: fall back to the last positive-mass entry.
        &self
            .support
            .iter()
            .rev()
            .find(|(_, p)| *p > 0.0)
            .expect("distribution has positive mass")
            .0
    }
}
