//! Output contract enforcement at the agent boundary.

use super::schema::{validate_payload, ValidationReport};
use super::InterfaceContract;
use serde_json::Value;

/// Default retry budget when the blueprint does not configure one.
pub const DEFAULT_GATE_RETRIES: u32 = 2;

/// What the generator handed back: already-structured data, or raw text
/// that may encode structured data.
#[derive(Debug, Clone)]
pub enum RawOutput {
    Structured(Value),
    Text(String),
}

/// Outcome of one pass through the contract gate.
#[derive(Debug, Clone, PartialEq)]
pub enum GateOutcome {
    /// Output conforms to the declared schema.
    Accept(Value),
    /// Output violates the schema and retries remain; the caller should
    /// re-prompt and call the gate again with a decremented counter.
    Retry(ValidationReport),
    /// Output violates the schema and the retry budget is exhausted.
    Reject(ValidationReport),
}

/// Gate an agent's raw output against its declared output schema.
///
/// Text output gets one corrective parsing pass (text to structured value,
/// never semantic repair): if it parses and the parsed value conforms, it
/// is accepted. The gate never accepts a nonconformant value.
pub fn contract_gate(
    contract: &InterfaceContract,
    raw_output: RawOutput,
    retries_left: u32,
) -> GateOutcome {
    let schema = &contract.output_schema;
    let (value, report) = match raw_output {
        RawOutput::Structured(v) => {
            let report = validate_payload(schema, &v);
            (v, report)
        }
        RawOutput::Text(text) => {
            // One corrective pass. YAML subsumes JSON, and a plain string
            // parses to itself, so this also covers schemas expecting text.
            match serde_yaml::from_str::<Value>(&text) {
                Ok(parsed) => {
                    let report = validate_payload(schema, &parsed);
                    (parsed, report)
                }
                Err(_) => {
                    let v = Value::String(text);
                    let report = validate_payload(schema, &v);
                    (v, report)
                }
            }
        }
    };

    if report.is_conformant() {
        GateOutcome::Accept(value)
    } else if retries_left > 0 {
        GateOutcome::Retry(report)
    } else {
        GateOutcome::Reject(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blueprint::{SchemaNode, SchemaType};
    use serde_json::json;

    fn contract() -> InterfaceContract {
        InterfaceContract {
            input_schema: SchemaNode::object([]),
            output_schema: SchemaNode::object([
                ("code_ptr_url".to_string(), SchemaNode::of(SchemaType::String)),
                ("review".to_string(), SchemaNode::of(SchemaType::String)),
            ]),
        }
    }

    #[test]
    fn conformant_value_accepted_without_retries() {
        let out = contract_gate(
            &contract(),
            RawOutput::Structured(json!({"code_ptr_url": "a", "review": "b"})),
            0,
        );
        assert!(matches!(out, GateOutcome::Accept(_)));
    }

    #[test]
    fn nonconformant_with_retries_asks_for_retry() {
        let out = contract_gate(
            &contract(),
            RawOutput::Structured(json!({"review": 7})),
            2,
        );
        assert!(matches!(out, GateOutcome::Retry(_)));
    }

    #[test]
    fn nonconformant_without_retries_rejected_with_report() {
        let out = contract_gate(&contract(), RawOutput::Structured(json!({"review": 7})), 0);
        match out {
            GateOutcome::Reject(report) => {
                assert_eq!(report.violations[0].path, "$.review");
            }
            other => panic!("expected Reject, got {other:?}"),
        }
    }

    #[test]
    fn corrective_parse_recovers_structured_text() {
        let text = r#"{"code_ptr_url": "org/repo/code.py#L1-L10", "review": "ok"}"#;
        let out = contract_gate(&contract(), RawOutput::Text(text.to_string()), 0);
        match out {
            GateOutcome::Accept(v) => assert_eq!(v["review"], "ok"),
            other => panic!("expected Accept, got {other:?}"),
        }
    }

    #[test]
    fn freeform_text_rejected_against_object_schema() {
        let out = contract_gate(
            &contract(),
            RawOutput::Text("The code looks fine to me!".to_string()),
            0,
        );
        match out {
            GateOutcome::Reject(report) => {
                assert_eq!(report.violations[0].expected, "object");
                assert_eq!(report.violations[0].found, "string");
            }
            other => panic!("expected Reject, got {other:?}"),
        }
    }

    #[test]
    fn text_accepted_when_schema_wants_text() {
        let c = InterfaceContract {
            input_schema: SchemaNode::object([]),
            output_schema: SchemaNode::of(SchemaType::String),
        };
        let out = contract_gate(&c, RawOutput::Text("plain answer".to_string()), 0);
        assert!(matches!(out, GateOutcome::Accept(Value::String(_))));
    }
}
