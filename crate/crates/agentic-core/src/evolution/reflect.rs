//! Failure reflection into lessons, and lesson injection into context.

use super::Lesson;
use crate::kernel::{MemoryContext, Observation, Trajectory};
use crate::memory::{embed, LongTermMemory, MemoryRecord};
use serde_json::Value;
use thiserror::Error;

/// Reflection is defined on failed trajectories only.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("trajectory succeeded; nothing to reflect on")]
pub struct NotAFailure;

/// Distill a failed trajectory into a lesson.
///
/// The root cause names the first failing step (first error observation
/// or first negative step reward); when a successful sibling trajectory
/// is available, the lesson also names the first diverging tool or
/// argument. A failure without any error signal falls back to a
/// horizon-exhaustion lesson.
pub fn reflect(failed: &Trajectory, sibling: Option<&Trajectory>) -> Result<Lesson, NotAFailure> {
    if failed.outcome() >= 1.0 {
        return Err(NotAFailure);
    }

    let source_trajectory = format!(
        "trajectory:{}steps:{:?}",
        failed.steps.len(),
        failed.status
    );

    // First error signal: an error-bearing observation (step inputs plus
    // the terminal observation) or a negative step reward.
    let mut error_at: Option<(u64, &Observation)> = None;
    for step in &failed.steps {
        if observation_error(&step.observation).is_some() {
            error_at = Some((step.tick, &step.observation));
            break;
        }
        if step.reward < 0.0 {
            error_at = Some((step.tick, &step.observation));
            break;
        }
    }
    if error_at.is_none() {
        if let Some(obs) = &failed.final_observation {
            if observation_error(obs).is_some() {
                let tick = failed.steps.last().map(|s| s.tick).unwrap_or(0);
                error_at = Some((tick, obs));
            }
        }
    }

    let (root_cause, mut text) = match error_at {
        Some((tick, obs)) => {
            let message = observation_error(obs).unwrap_or("step failed");
            let root_cause = format!("step {tick}: {message}");
            let text = match expected_of(obs) {
                Some(expected) => {
                    let tool = obs
                        .payload
                        .get("tool")
                        .and_then(Value::as_str)
                        .unwrap_or("the tool");
                    format!("tool {tool} requires {expected}")
                }
                None => format!("avoid the failure at step {tick}: {message}"),
            };
            (root_cause, text)
        }
        None => {
            let t = failed.steps.len();
            (
                format!("horizon exhausted at step {t}"),
                "the task exceeded its step horizon; plan a shorter route".to_string(),
            )
        }
    };

    if let Some(success) = sibling {
        if let Some(diff) = first_divergence(failed, success) {
            text.push_str(&format!("; successful sibling differed: {diff}"));
        }
    }

    Ok(Lesson {
        embedding: embed(&text),
        text,
        root_cause,
        source_trajectory,
    })
}

fn observation_error(obs: &Observation) -> Option<&str> {
    obs.payload.get("error").and_then(Value::as_str)
}

fn expected_of(obs: &Observation) -> Option<String> {
    let expected = obs.payload.get("expected")?;
    match expected {
        Value::String(s) => Some(format!("format {s}")),
        other => Some(other.to_string()),
    }
}

fn first_divergence(failed: &Trajectory, success: &Trajectory) -> Option<String> {
    for (a, b) in failed.steps.iter().zip(&success.steps) {
        if a.action.tool_name != b.action.tool_name {
            return Some(format!(
                "tool `{}` instead of `{}`",
                b.action.tool_name, a.action.tool_name
            ));
        }
        if a.action.arguments != b.action.arguments {
            return Some(format!(
                "arguments {} instead of {}",
                b.action.arguments, a.action.arguments
            ));
        }
    }
    None
}

/// Store a lesson in a long-term store (lessons ride the semantic store,
/// keyed by their text).
pub fn store_lesson(store: &mut LongTermMemory, lesson: &Lesson, tick: u64) {
    if store.contains_text(&lesson.text) {
        return;
    }
    store.insert_insight(
        crate::memory::StoreKind::Semantic,
        crate::memory::Insight {
            text: lesson.text.clone(),
            utility_score: 1.0,
            source_episode: lesson.source_trajectory.clone(),
            outcome: crate::memory::InsightOutcome::Failure,
        },
        tick,
    );
}

/// Retrieve the top-`k` lessons for a query and prepend them to the
/// context's retrieved set, charging the context token count. Returns the
/// injected lessons.
pub fn inject_lessons(
    context: &mut MemoryContext,
    store: &LongTermMemory,
    query_context: &str,
    k: usize,
) -> Vec<Lesson> {
    if k == 0 || store.is_empty() {
        return Vec::new();
    }
    let mut lessons = Vec::new();
    for (record, _similarity) in store.retrieve_similar(None, query_context, k) {
        lessons.push(lesson_of_record(&record));
        context.attach_retrieved(record);
    }
    lessons
}

/// Reconstruct the lesson view of a stored record (the text is the
/// conditioning payload; provenance fields are not persisted).
pub fn lesson_of_record(record: &MemoryRecord) -> Lesson {
    Lesson {
        text: record.insight.text.clone(),
        root_cause: record.insight.source_episode.clone(),
        source_trajectory: record.insight.source_episode.clone(),
        embedding: record.embedding.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{EnvStep, Environment, TerminalStatus};

    fn failed_date_trajectory() -> Trajectory {
        // Drive the real date env to a failure so the trajectory shape is
        // authentic.
        let mut env = super::super::DateFormatEnv::new(3);
        let first = env.reset(0);
        let wrong = env
            .candidates()
            .into_iter()
            .find(|a| a.arguments["format"] != env.correct_format())
            .unwrap();
        let EnvStep { observation, reward, .. } = env.step(&wrong);
        Trajectory {
            steps: vec![crate::kernel::TrajectoryStep {
                tick: 0,
                observation: first,
                reasoning: crate::kernel::ReasoningTrace {
                    text: "try a format".into(),
                    kind: crate::kernel::TraceKind::Plan,
                    token_cost: 2,
                },
                action: wrong,
                reward,
            }],
            status: TerminalStatus::EnvTerminal,
            terminal_state_ref: env.state_hash(),
            final_observation: Some(observation),
            total_tokens: 3,
        }
    }

    use super::super::envs::ToyEnv;

    #[test]
    fn date_failure_produces_an_actionable_lesson() {
        let env = super::super::DateFormatEnv::new(3);
        let lesson = reflect(&failed_date_trajectory(), None).unwrap();
        assert!(lesson.root_cause.starts_with("step 0"));
        assert!(lesson.root_cause.contains("invalid date format"));
        assert!(lesson.text.contains(env.correct_format()));
    }

    #[test]
    fn success_is_not_reflectable() {
        let mut traj = failed_date_trajectory();
        traj.steps[0].reward = 1.0;
        assert_eq!(reflect(&traj, None), Err(NotAFailure));
    }

    #[test]
    fn horizon_exhaustion_fallback() {
        let mut traj = failed_date_trajectory();
        traj.final_observation = Some(crate::kernel::Observation {
            payload: serde_json::json!({"status": "running"}),
            source: crate::kernel::ObservationSource::System,
            timestamp: 1,
        });
        traj.steps[0].observation.payload = serde_json::json!({"task": "x"});
        traj.status = TerminalStatus::HorizonReached;
        let lesson = reflect(&traj, None).unwrap();
        assert_eq!(lesson.root_cause, "horizon exhausted at step 1");
    }

    #[test]
    fn sibling_divergence_named_in_the_lesson() {
        let env = super::super::DateFormatEnv::new(3);
        let failed = failed_date_trajectory();
        let mut success = failed.clone();
        success.steps[0].action.arguments = serde_json::json!({"format": env.correct_format()});
        success.steps[0].reward = 1.0;
        let lesson = reflect(&failed, Some(&success)).unwrap();
        assert!(lesson.text.contains("successful sibling differed"));
    }

    #[test]
    fn inject_lessons_empty_store_and_zero_k_are_noops() {
        let mut context = MemoryContext::new();
        let store = LongTermMemory::new();
        assert!(inject_lessons(&mut context, &store, "anything", 1).is_empty());
        assert_eq!(context.retrieved.len(), 0);

        let mut store = LongTermMemory::new();
        store_lesson(
            &mut store,
            &Lesson {
                text: "always check the format".into(),
                root_cause: "r".into(),
                source_trajectory: "t".into(),
                embedding: embed("always check the format"),
            },
            1,
        );
        assert!(inject_lessons(&mut context, &store, "format", 0).is_empty());
    }

    #[test]
    fn injection_charges_the_context_token_count() {
        let mut store = LongTermMemory::new();
        store_lesson(
            &mut store,
            &Lesson {
                text: "tool submit_date requires format %Y-%m-%d".into(),
                root_cause: "r".into(),
                source_trajectory: "t".into(),
                embedding: embed("x"),
            },
            1,
        );
        let mut context = MemoryContext::new();
        let before = context.token_count;
        let lessons = inject_lessons(&mut context, &store, "submit_date format", 1);
        assert_eq!(lessons.len(), 1);
        assert_eq!(context.retrieved.len(), 1);
        assert!(context.token_count > before);
    }

    #[test]
    fn duplicate_lessons_not_stored_twice() {
        let mut store = LongTermMemory::new();
        let lesson = Lesson {
            text: "one lesson".into(),
            root_cause: "r".into(),
            source_trajectory: "t".into(),
            embedding: embed("one lesson"),
        };
        store_lesson(&mut store, &lesson, 1);
        store_lesson(&mut store, &lesson, 2);
        assert_eq!(store.len(), 1);
    }
}
