//! Speculation branches: predict a tool output, compute ahead, commit on
//! match, roll back on divergence.
//!
//! Side effects inside a lookahead are buffered, never emitted while the
//! branch is open. Rollback discards the lookahead in toto.

use crate::kernel::ExternalAction;
use serde_json::Value;
use std::collections::BTreeMap;

/// Maximum nesting of open branches. Bounds rollback cost.
pub const MAX_SPECULATION_DEPTH: usize = 2;

/// Predicts the likely output of a pending tool call. Returning `None`
/// declines to speculate (the call degenerates to a synchronous wait).
pub trait OutputPredictor {
    fn predict(&self, tool_name: &str, arguments: &Value) -> Option<Value>;
}

/// Structural equivalence with per-tool ignorable field paths (dotted,
/// e.g. `meta.timestamp`). Declaring a path ignorable asserts that
/// downstream computation does not read it.
#[derive(Debug, Clone, Default)]
pub struct Matcher {
    ignorable: BTreeMap<String, Vec<String>>,
}

impl Matcher {
    pub fn exact() -> Matcher {
        Matcher::default()
    }

    pub fn with_ignorable(mut self, tool: &str, paths: &[&str]) -> Matcher {
        self.ignorable
            .insert(tool.to_string(), paths.iter().map(|p| p.to_string()).collect());
        self
    }

    /// Equivalence for commit decisions: structural equality after
    /// removing the tool's ignorable paths from both sides.
    pub fn matches(&self, tool: &str, prediction: &Value, actual: &Value) -> bool {
        match self.ignorable.get(tool) {
            None => prediction == actual,
            Some(paths) => {
                let mut p = prediction.clone();
                let mut a = actual.clone();
                for path in paths {
                    remove_path(&mut p, path);
                    remove_path(&mut a, path);
                }
                p == a
            }
        }
    }
}

fn remove_path(value: &mut Value, path: &str) {
    let mut parts = path.splitn(2, '.');
    let head = parts.next().unwrap_or_default();
    match parts.next() {
        None => {
            if let Some(map) = value.as_object_mut() {
                map.remove(head);
            }
        }
        Some(rest) => {
            if let Some(next) = value.get_mut(head) {
                remove_path(next, rest);
            }
        }
    }
}

/// One precomputed lookahead step. External effects carry an `effect`
/// payload that stays buffered until commit.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferedStep {
    pub description: String,
    pub value: Value,
    /// A side effect to emit on commit, if any.
    pub effect: Option<ExternalAction>,
}

/// Lifecycle of a branch; a branch resolves exactly once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchStatus {
    Open,
    Committed,
    RolledBack,
}

/// A pending tool call plus the lookahead computed from its predicted
/// output.
#[derive(Debug, Clone)]
pub struct SpeculationBranch {
    pub pending_call: ExternalAction,
    pub prediction: Value,
    pub lookahead: Vec<BufferedStep>,
    pub status: BranchStatus,
}

/// Outcome of resolving a branch against the actual tool output.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolution {
    /// The lookahead (including buffered effects) is emitted in order.
    Committed(Vec<BufferedStep>),
    /// The lookahead was discarded; execution regenerates from the actual
    /// output.
    RolledBack,
}

/// Open a speculation branch for a dispatched call: predict its output and
/// precompute the continuation from the prediction. A declining predictor
/// yields an empty lookahead.
pub fn speculate(
    call: &ExternalAction,
    predictor: &dyn OutputPredictor,
    continue_fn: impl FnOnce(&Value) -> Vec<BufferedStep>,
) -> SpeculationBranch {
    match predictor.predict(&call.tool_name, &call.arguments) {
        Some(prediction) => {
            let lookahead = continue_fn(&prediction);
            SpeculationBranch {
                pending_call: call.clone(),
                prediction,
                lookahead,
                status: BranchStatus::Open,
            }
        }
        None => SpeculationBranch {
            pending_call: call.clone(),
            prediction: Value::Null,
            lookahead: Vec::new(),
            status: BranchStatus::Open,
        },
    }
}

/// Resolve an open branch against the actual output.
pub fn resolve(
    branch: &mut SpeculationBranch,
    actual: &Value,
    equivalence: &Matcher,
) -> Resolution {
    assert_eq!(branch.status, BranchStatus::Open, "branch resolves exactly once");
    if equivalence.matches(&branch.pending_call.tool_name, &branch.prediction, actual) {
        branch.status = BranchStatus::Committed;
        Resolution::Committed(std::mem::take(&mut branch.lookahead))
    } else {
        branch.status = BranchStatus::RolledBack;
        branch.lookahead.clear();
        Resolution::RolledBack
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    struct ConstPredictor(Option<Value>);

    impl OutputPredictor for ConstPredictor {
        fn predict(&self, _tool: &str, _args: &Value) -> Option<Value> {
            self.0.clone()
        }
    }

    fn call() -> ExternalAction {
        ExternalAction {
            tool_alias: "srv".into(),
            tool_name: "get_quote".into(),
            arguments: json!({"symbol": "AAPL"}),
            token_cost: 1,
        }
    }

    #[test]
    fn exact_match_commits_with_lookahead() {
        let predictor = ConstPredictor(Some(json!({"price": 10})));
        let mut branch = speculate(&call(), &predictor, |pred| {
            vec![BufferedStep {
                description: "derive".into(),
                value: json!({"double": pred["price"].as_i64().unwrap() * 2}),
                effect: None,
            }]
        });
        assert_eq!(branch.lookahead.len(), 1);
        let resolution = resolve(&mut branch, &json!({"price": 10}), &Matcher::exact());
        match resolution {
            Resolution::Committed(steps) => assert_eq!(steps[0].value["double"], 20),
            other => panic!("expected commit, got {other:?}"),
        }
        assert_eq!(branch.status, BranchStatus::Committed);
    }

    #[test]
    fn declining_predictor_gives_empty_lookahead() {
        let predictor = ConstPredictor(None);
        let branch = speculate(&call(), &predictor, |_| {
            panic!("continuation must not run without a prediction")
        });
        assert!(branch.lookahead.is_empty());
    }

    #[test]
    fn ignorable_field_difference_still_commits() {
        let predictor = ConstPredictor(Some(json!({"price": 10, "ts": 0})));
        let matcher = Matcher::exact().with_ignorable("get_quote", &["ts"]);
        let mut branch = speculate(&call(), &predictor, |_| vec![]);
        let resolution = resolve(&mut branch, &json!({"price": 10, "ts": 999}), &matcher);
        assert_eq!(resolution, Resolution::Committed(vec![]));
    }

    #[test]
    fn structural_divergence_rolls_back_and_discards() {
        let predictor = ConstPredictor(Some(json!({"price": 10})));
        let mut branch = speculate(&call(), &predictor, |_| {
            vec![BufferedStep {
                description: "ahead".into(),
                value: json!(1),
                effect: Some(ExternalAction {
                    tool_alias: "srv".into(),
                    tool_name: "post_alert".into(),
                    arguments: json!({}),
                    token_cost: 1,
                }),
            }]
        });
        let resolution = resolve(&mut branch, &json!({"price": 11}), &Matcher::exact());
        assert_eq!(resolution, Resolution::RolledBack);
        assert_eq!(branch.status, BranchStatus::RolledBack);
        assert!(branch.lookahead.is_empty(), "lookahead discarded in toto");
    }

    #[test]
    fn nested_path_ignorable() {
        let matcher = Matcher::exact().with_ignorable("t", &["meta.timestamp"]);
        let p = json!({"x": 1, "meta": {"timestamp": 1, "source": "a"}});
        let a = json!({"x": 1, "meta": {"timestamp": 2, "source": "a"}});
        assert!(matcher.matches("t", &p, &a));
        let b = json!({"x": 1, "meta": {"timestamp": 2, "source": "b"}});
        assert!(!matcher.matches("t", &p, &b));
    }
}
