//! Property tests over the spec's module invariants.

use agentic_core::blueprint::{
    contract_gate, parse_blueprint, serialize_blueprint, validate_payload, GateOutcome, RawOutput,
    InterfaceContract, SchemaNode, SchemaType,
};
use agentic_core::guard::{project_policy, ActionDistribution, BudgetState, ConstraintManifold, SafetyPredicate};
use agentic_core::kernel::ExternalAction;
use agentic_core::memory::{segment_episodes, Event};
use proptest::prelude::*;
use serde_json::json;

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,11}"
}

fn blueprint_text() -> impl Strategy<Value = String> {
    (
        ident(),
        0u32..100,
        0u32..100,
        0u32..100,
        1u64..1_000_000,
        1u32..50,
        0.0f64..2.0,
        prop::sample::select(vec!["auto", "required", "none"]),
        prop::collection::vec("[a-z_]{1,10}", 0..4),
    )
        .prop_map(
            |(id, major, minor, patch, budget, steps, temp, choice, tools)| {
                format!(
                    r#"
metadata: {{ id: {id}, name: "Agent {id}", version: {major}.{minor}.{patch} }}
interface:
  input: {{ inline_schema: {{ type: object, properties: {{ q: {{ type: string }} }} }} }}
  output: {{ inline_schema: {{ type: object }} }}
constraints:
  budget: {{ max_token_usage: {budget} }}
action_space:
  mcp_servers:
    - alias: srv
      url: mem://srv
      allow_tools: [{}]
execution_policy:
  id: loop
  config: {{ max_steps: {steps}, temperature: {temp:.3}, tool_choice: {choice} }}
"#,
                    tools
                        .iter()
                        .enumerate()
                        .map(|(i, t)| format!("{t}_{i}"))
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            },
        )
}

proptest! {
    /// Round-trip: parse(serialize(b)) = b for every valid blueprint.
    #[test]
    fn blueprint_roundtrip(text in blueprint_text()) {
        let bp = parse_blueprint(&text).expect("generated text is valid");
        let serialized = serialize_blueprint(&bp);
        let again = parse_blueprint(&serialized).expect("canonical form reparses");
        prop_assert_eq!(bp, again);
    }
}

fn action(name: String) -> ExternalAction {
    ExternalAction {
        tool_alias: "srv".into(),
        tool_name: name,
        arguments: json!({}),
        token_cost: 1,
    }
}

proptest! {
    /// Projection output sums to 1, zeroes unsafe mass exactly, and
    /// preserves relative order among safe actions.
    #[test]
    fn projection_invariants(
        weights in prop::collection::vec(0.0f64..1.0, 1..10),
        denied_mask in prop::collection::vec(any::<bool>(), 10),
    ) {
        let total: f64 = weights.iter().sum();
        prop_assume!(total > 0.0);
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let names: Vec<String> = (0..probs.len()).map(|i| format!("t{i}")).collect();
        let denied: Vec<String> = names
            .iter()
            .zip(&denied_mask)
            .filter(|(_, d)| **d)
            .map(|(n, _)| n.clone())
            .collect();
        let denied_clone = denied.clone();
        let manifold = ConstraintManifold::new(vec![SafetyPredicate::new(
            "deny",
            "random subset",
            move |a: &ExternalAction| !denied_clone.contains(&a.tool_name),
        )]);
        let raw = ActionDistribution::new(
            names.iter().cloned().map(action).zip(probs.iter().copied()).collect(),
        );
        match project_policy(&raw, &manifold) {
            Ok(safe) => {
                let out: Vec<f64> = safe.support().iter().map(|(_, p)| *p).collect();
                prop_assert!((out.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                for (i, name) in names.iter().enumerate() {
                    if denied.contains(name) {
                        prop_assert_eq!(out[i], 0.0);
                    }
                }
                for i in 0..out.len() {
                    for j in 0..out.len() {
                        let safe_i = !denied.contains(&names[i]);
                        let safe_j = !denied.contains(&names[j]);
                        if safe_i && safe_j && probs[i] > probs[j] {
                            prop_assert!(out[i] > out[j]);
                        }
                    }
                }
            }
            Err(_) => {
                let safe_mass: f64 = probs
                    .iter()
                    .zip(&names)
                    .filter(|(_, n)| !denied.contains(*n))
                    .map(|(p, _)| p)
                    .sum();
                prop_assert_eq!(safe_mass, 0.0);
            }
        }
    }

    /// The gate never accepts a value the schema rejects.
    #[test]
    fn gate_soundness(
        value in prop::collection::btree_map("[a-z]{1,6}", -1000i64..1000, 0..5),
        retries in 0u32..3,
    ) {
        let contract = InterfaceContract {
            input_schema: SchemaNode::object([]),
            output_schema: SchemaNode {
                ty: SchemaType::Object,
                properties: [("status".to_string(), SchemaNode::of(SchemaType::String))]
                    .into_iter()
                    .collect(),
                required: vec!["status".to_string()],
                items: None,
            },
        };
        let payload = serde_json::to_value(&value).unwrap();
        let outcome = contract_gate(&contract, RawOutput::Structured(payload.clone()), retries);
        if let GateOutcome::Accept(v) = outcome {
            prop_assert!(validate_payload(&contract.output_schema, &v).is_conformant());
        } else {
            prop_assert!(!validate_payload(&contract.output_schema, &payload).is_conformant());
        }
    }

    /// No spend sequence can push consumption past the budget, and the
    /// multiplier never goes negative.
    #[test]
    fn budget_primal_feasibility(
        budget in 1u64..5_000,
        spends in prop::collection::vec(0u64..500, 1..50),
    ) {
        let mut state = BudgetState::new(budget);
        for spend in spends {
            match state.spend(spend) {
                Ok(next) => state = next,
                Err(_) => {
                    prop_assert!(spend > state.remaining());
                }
            }
            prop_assert!(state.consumed() <= state.budget());
            prop_assert!(state.lambda() >= 0.0);
        }
    }

    /// Episode segmentation partitions its input exactly once.
    #[test]
    fn segmentation_partitions(kinds in prop::collection::vec(0u8..4, 1..40)) {
        let events: Vec<Event> = kinds
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let tick = i as u64 + 1;
                match k {
                    0 => Event::user(tick, "continue with the next piece"),
                    1 => Event::tool_call(tick, "get_data", json!({"i": i}), None),
                    2 => Event::system_log(tick, "error", "transient failure"),
                    _ => Event::system_log(tick, "info", "progress"),
                }
            })
            .collect();
        let episodes = segment_episodes(&events);
        let mut cursor = 0usize;
        for ep in &episodes {
            prop_assert_eq!(ep.start, cursor, "no gaps, no overlaps");
            prop_assert_eq!(ep.events.len(), ep.end - ep.start);
            cursor = ep.end;
        }
        prop_assert_eq!(cursor, events.len());
    }
}
