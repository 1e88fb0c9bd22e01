//! Line-delimited trajectory logs for replay and audit.

use super::episode::AuditEvent;
use super::Trajectory;
use serde_json::{json, Value};

/// One line of the trajectory log: either a completed step or a guard
/// audit event.
#[derive(Debug, Clone, PartialEq)]
pub enum LogLine {
    Step(Value),
    Audit(Value),
}

impl LogLine {
    pub fn to_json(&self) -> &Value {
        match self {
            LogLine::Step(v) | LogLine::Audit(v) => v,
        }
    }
}

/// Render a trajectory plus its audit events as log lines, one JSON object
/// per line. Step lines carry `{tick, observation, reasoning, action,
/// reward, tokens}`; audit lines additionally carry an `audit` tag.
pub fn trajectory_log_lines(trajectory: &Trajectory, audit: &[AuditEvent]) -> Vec<String> {
    let mut lines: Vec<(u64, u8, String)> = Vec::new();
    for step in &trajectory.steps {
        let line = json!({
            "tick": step.tick,
            "observation": step.observation,
            "reasoning": step.reasoning,
            "action": step.action,
            "reward": step.reward,
            "tokens": step.token_cost(),
        });
        lines.push((step.tick, 0, line.to_string()));
    }
    for event in audit {
        let (tick, order) = match event {
            // Blocked candidates precede the step they were rejected from;
            // multiplier transitions follow the charge.
            AuditEvent::BlockedAction { tick, .. } => (*tick, 0),
            AuditEvent::LambdaTransition { tick, .. } => (*tick, 1),
        };
        let line = serde_json::to_value(event).expect("audit event serializes");
        lines.push((tick, order, line.to_string()));
    }
    lines.sort_by_key(|line| (line.0, line.1));
    lines.into_iter().map(|(_, _, l)| l).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{
        ExternalAction, Observation, ObservationSource, ReasoningTrace, TerminalStatus, TraceKind,
        TrajectoryStep,
    };
    use serde_json::json;

    #[test]
    fn step_lines_carry_the_declared_fields() {
        let trajectory = Trajectory {
            steps: vec![TrajectoryStep {
                tick: 0,
                observation: Observation {
                    payload: json!({"q": 1}),
                    source: ObservationSource::User,
                    timestamp: 0,
                },
                reasoning: ReasoningTrace {
                    text: "plan".into(),
                    kind: TraceKind::Plan,
                    token_cost: 1,
                },
                action: ExternalAction {
                    tool_alias: "srv".into(),
                    tool_name: "get_x".into(),
                    arguments: json!({}),
                    token_cost: 2,
                },
                reward: 1.0,
            }],
            status: TerminalStatus::EnvTerminal,
            terminal_state_ref: 0,
            final_observation: None,
            total_tokens: 3,
        };
        let lines = trajectory_log_lines(&trajectory, &[]);
        assert_eq!(lines.len(), 1);
        let parsed: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
        for key in ["tick", "observation", "reasoning", "action", "reward", "tokens"] {
            assert!(parsed.get(key).is_some(), "missing key {key}");
        }
        assert_eq!(parsed["tokens"], 3);
    }

    #[test]
    fn audit_lines_interleave_by_tick() {
        let trajectory = Trajectory {
            steps: vec![],
            status: TerminalStatus::HorizonReached,
            terminal_state_ref: 0,
            final_observation: None,
            total_tokens: 0,
        };
        let audit = vec![
            AuditEvent::LambdaTransition {
                tick: 2,
                from: 0.0,
                to: 0.5,
            },
            AuditEvent::BlockedAction {
                tick: 1,
                tool_alias: "srv".into(),
                tool_name: "rm".into(),
                verdicts: vec![("deny_rm".into(), false)],
            },
        ];
        let lines = trajectory_log_lines(&trajectory, &audit);
        assert!(lines[0].contains("blocked_action"));
        assert!(lines[1].contains("lambda_transition"));
    }
}
