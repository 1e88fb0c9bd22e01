//! Policy projection onto the constraint manifold.

use super::{ActionDistribution, ConstraintManifold, EmptyManifoldError};

/// Project a raw action distribution onto the manifold.
///
/// Inadmissible actions get probability exactly 0; admissible ones keep
/// their raw probability divided by the total safe mass, preserving their
/// relative order. Fails when no safe action carries positive mass.
pub fn project_policy(
    raw: &ActionDistribution,
    manifold: &ConstraintManifold,
) -> Result<ActionDistribution, EmptyManifoldError> {
    let admitted: Vec<bool> = raw
        .support()
        .iter()
        .map(|(action, _)| manifold.admissible(action).admitted)
        .collect();
    let safe_mass: f64 = raw
        .support()
        .iter()
        .zip(&admitted)
        .filter(|(_, ok)| **ok)
        .map(|((_, p), _)| p)
        .sum();
    if safe_mass == 0.0 {
        return Err(EmptyManifoldError);
    }
    let support = raw
        .support()
        .iter()
        .zip(&admitted)
        .map(|((action, p), ok)| (action.clone(), if *ok { p / safe_mass } else { 0.0 }))
        .collect();
    Ok(ActionDistribution::new(support))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guard::SafetyPredicate;
    use crate::kernel::ExternalAction;
    use serde_json::json;

    fn action(name: &str) -> ExternalAction {
        ExternalAction {
            tool_alias: "srv".into(),
            tool_name: name.into(),
            arguments: json!({}),
            token_cost: 1,
        }
    }

    fn deny(name: &'static str) -> SafetyPredicate {
        SafetyPredicate::new(
            format!("deny_{name}"),
            format!("forbids tool {name}"),
            move |a: &ExternalAction| a.tool_name != name,
        )
    }

    #[test]
    fn renormalizes_over_safe_mass() {
        let raw = ActionDistribution::new(vec![
            (action("a1"), 0.5),
            (action("a2"), 0.3),
            (action("a3"), 0.2),
        ]);
        let manifold = ConstraintManifold::new(vec![deny("a3")]);
        let safe = project_policy(&raw, &manifold).unwrap();
        let probs: Vec<f64> = safe.support().iter().map(|(_, p)| *p).collect();
        assert!((probs[0] - 0.625).abs() < 1e-12);
        assert!((probs[1] - 0.375).abs() < 1e-12);
        assert_eq!(probs[2], 0.0);
    }

    #[test]
    fn all_safe_is_identity() {
        let raw = ActionDistribution::new(vec![(action("a"), 0.7), (action("b"), 0.3)]);
        let safe = project_policy(&raw, &ConstraintManifold::allow_all()).unwrap();
        assert_eq!(raw, safe);
    }

    #[test]
    fn all_unsafe_raises() {
        let raw = ActionDistribution::new(vec![(action("a"), 1.0)]);
        let manifold = ConstraintManifold::new(vec![deny("a")]);
        assert_eq!(project_policy(&raw, &manifold), Err(EmptyManifoldError));
    }

    #[test]
    fn zero_mass_on_safe_actions_is_still_empty() {
        // The only admissible action carries probability 0.
        let raw = ActionDistribution::new(vec![(action("bad"), 1.0), (action("ok"), 0.0)]);
        let manifold = ConstraintManifold::new(vec![deny("bad")]);
        assert_eq!(project_policy(&raw, &manifold), Err(EmptyManifoldError));
    }

    #[test]
    fn split_mass_projects_to_the_allowed_action() {
        let raw = ActionDistribution::new(vec![(action("ok"), 0.5), (action("bad"), 0.5)]);
        let manifold = ConstraintManifold::new(vec![deny("bad")]);
        let safe = project_policy(&raw, &manifold).unwrap();
        assert_eq!(safe.support()[0].1, 1.0);
        assert_eq!(safe.support()[1].1, 0.0);
    }

    #[test]
    fn verdict_list_has_one_entry_per_predicate() {
        let manifold = ConstraintManifold::new(vec![deny("x"), deny("y"), deny("z")]);
        let verdict = manifold.admissible(&action("y"));
        assert!(!verdict.admitted);
        let flags: Vec<bool> = verdict.verdicts.iter().map(|(_, ok)| *ok).collect();
        assert_eq!(flags, vec![true, false, true]);
    }

    #[test]
    fn empty_conjunction_is_vacuously_true() {
        let manifold = ConstraintManifold::allow_all();
        assert!(manifold.admissible(&action("anything")).admitted);
    }
}
