//! The consolidation pipeline: segmentation, insight extraction, storage
//! routing, and context compression, in that order.

use super::{
    Episode, Event, EventKind, EventStream, Insight, InsightOutcome, LongTermMemory, StoreKind,
};
use serde_json::Value;

/// Which part of the stream a consolidation pass covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Span {
    /// The whole stream (manual / between-episode consolidation).
    All,
    /// The oldest half, rounded up (capacity-trigger consolidation).
    OldestHalf,
}

/// What one consolidation pass did.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsolidationReport {
    pub records_stored: usize,
    pub freed_tokens: u64,
    /// True when there was nothing unconsolidated to process.
    pub skipped: bool,
}

const GREETINGS: &[&str] = &[
    "hello", "hi", "hey", "thanks", "thank you", "ok", "okay", "great", "sure", "got it",
    "sounds good", "you're welcome", "no problem", "goodbye", "bye",
];

/// True for content the retention filter considers low-utility
/// (greetings, bare acknowledgments). Also used by the executor's cold
/// storage path.
pub fn is_low_utility_text(text: &str) -> bool {
    let normalized: String = text
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace() || *c == '\'')
        .collect();
    let normalized = normalized.split_whitespace().collect::<Vec<_>>().join(" ");
    normalized.is_empty() || GREETINGS.contains(&normalized.as_str())
}

fn event_text(event: &Event) -> Option<&str> {
    event.payload.get("text").and_then(Value::as_str)
}

fn is_greeting_event(event: &Event) -> bool {
    event.kind == EventKind::UserEvent
        && event_text(event).map(is_low_utility_text).unwrap_or(false)
}

/// Partition events into coherent logical episodes.
///
/// Boundaries fall before every user event and after every terminal error
/// burst (one or more consecutive error logs followed by a non-error
/// event). Every event lands in exactly one episode.
pub fn segment_episodes(events: &[Event]) -> Vec<Episode> {
    assert!(!events.is_empty(), "events must be nonempty");
    let mut boundaries = vec![0usize];
    for i in 1..events.len() {
        let user_boundary = events[i].kind == EventKind::UserEvent;
        let burst_boundary = events[i - 1].is_error_log() && !events[i].is_error_log();
        if user_boundary || burst_boundary {
            boundaries.push(i);
        }
    }
    boundaries.dedup();
    boundaries.push(events.len());

    boundaries
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0])
        .map(|(idx, w)| Episode {
            label: format!("episode-{idx}"),
            start: w[0],
            end: w[1],
            events: events[w[0]..w[1]].to_vec(),
        })
        .collect()
}

/// Extract the insights worth retaining from one episode.
///
/// Error/resolution pairs yield one insight describing the change that
/// fixed the call; an unresolved trailing error yields a failure insight;
/// otherwise the episode's final tool outcome yields one insight. Greeting
/// and summary events contribute nothing. Utility scoring: base 0.5, +0.3
/// for error-derived insights, +0.2 when the episode outcome was a
/// failure, capped at 1.
pub fn extract_insights(episode: &Episode) -> Vec<Insight> {
    let mut insights = Vec::new();
    let tool_events: Vec<&Event> = episode
        .events
        .iter()
        .filter(|e| e.kind == EventKind::ToolCallEvent && !e.is_summary())
        .collect();

    if tool_events.is_empty() {
        // Nothing but conversation and logs; greetings are dropped and
        // plain chatter yields no records.
        return insights;
    }

    let episode_failed = tool_events
        .last()
        .map(|e| tool_status(e) == Some(false))
        .unwrap_or(false);
    let failure_bonus = if episode_failed { 0.2 } else { 0.0 };

    // Error → resolution pairs: a failed call followed by a successful
    // call of the same tool.
    let mut resolved_failures = 0usize;
    let mut open_failure: Option<&Event> = None;
    for event in &tool_events {
        match tool_status(event) {
            Some(false) => open_failure = Some(event),
            Some(true) => {
                if let Some(failed) = open_failure.take() {
                    if tool_name(failed) == tool_name(event) {
                        let changed = changed_arg_keys(failed, event);
                        let detail = if changed.is_empty() {
                            "retry succeeded".to_string()
                        } else {
                            format!("retry with changed argument(s) {} succeeded", changed.join(", "))
                        };
                        insights.push(Insight {
                            text: format!(
                                "tool {} failed ({}); {detail}",
                                tool_name(event),
                                error_message(failed),
                            ),
                            utility_score: f64::min(0.5 + 0.3 + failure_bonus, 1.0),
                            source_episode: episode.label.clone(),
                            outcome: InsightOutcome::Success,
                        });
                        resolved_failures += 1;
                    }
                }
            }
            None => {}
        }
    }

    if let Some(failed) = open_failure {
        insights.push(Insight {
            text: format!(
                "tool {} failed ({}) and was not retried successfully",
                tool_name(failed),
                error_message(failed),
            ),
            utility_score: f64::min(0.5 + 0.3 + failure_bonus, 1.0),
            source_episode: episode.label.clone(),
            outcome: InsightOutcome::Failure,
        });
    } else if resolved_failures == 0 {
        // No error-derived insight covers the outcome; record it directly.
        let names: Vec<&str> = tool_events.iter().map(|e| tool_name(e)).collect();
        insights.push(Insight {
            text: format!("completed tool call(s) {} successfully", names.join(", ")),
            utility_score: f64::min(0.5 + failure_bonus, 1.0),
            source_episode: episode.label.clone(),
            outcome: InsightOutcome::Success,
        });
        // Multi-step successful sequences additionally become procedural
        // templates; the router keys off this phrasing.
        if names.len() >= 2 {
            insights.push(Insight {
                text: format!("sequence: {}", names.join(" -> ")),
                utility_score: f64::min(0.5 + failure_bonus, 1.0),
                source_episode: episode.label.clone(),
                outcome: InsightOutcome::Success,
            });
        }
    }

    insights
}

const STANDING_FACT_MARKERS: &[&str] = &["always", "never", "requires", "must"];

/// Route an insight to its long-term store: standing facts to semantic,
/// action templates to procedural, everything else to episodic.
pub fn route_insight(insight: &Insight) -> StoreKind {
    let lower = insight.text.to_lowercase();
    if insight.text.starts_with("sequence:") {
        StoreKind::Procedural
    } else if STANDING_FACT_MARKERS
        .iter()
        .any(|m| lower.split_whitespace().any(|w| w == *m))
    {
        StoreKind::Semantic
    } else {
        StoreKind::Episodic
    }
}

/// One full consolidation pass over the chosen span: segment, extract,
/// embed+store, compress. Insights duplicating an existing record's text
/// are dropped (their utility falls below zero under the −0.5 duplicate
/// penalty).
pub fn consolidate(
    stream: &mut EventStream,
    stores: &mut LongTermMemory,
    span: Span,
) -> ConsolidationReport {
    let n = stream.events().len();
    let span_len = match span {
        Span::All => n,
        Span::OldestHalf => n.div_ceil(2),
    };
    let unconsolidated = stream.events()[..span_len]
        .iter()
        .any(|e| !e.is_summary());
    if span_len == 0 || !unconsolidated {
        return ConsolidationReport {
            records_stored: 0,
            freed_tokens: 0,
            skipped: true,
        };
    }

    let span_events: Vec<Event> = stream.events()[..span_len]
        .iter()
        .filter(|e| !is_greeting_event(e))
        .cloned()
        .collect();

    let mut retained: Vec<Insight> = Vec::new();
    if !span_events.is_empty() {
        for episode in segment_episodes(&span_events) {
            for insight in extract_insights(&episode) {
                if stores.contains_text(&insight.text) {
                    continue;
                }
                retained.push(insight);
            }
        }
    }

    let tick = stream.events()[span_len - 1].tick;
    for insight in &retained {
        stores.insert_insight(route_insight(insight), insight.clone(), tick);
    }

    let summary = stream.compress_prefix(span_len, &retained);
    ConsolidationReport {
        records_stored: retained.len(),
        freed_tokens: summary.freed_tokens,
        skipped: false,
    }
}

fn tool_status(event: &Event) -> Option<bool> {
    event
        .payload
        .get("status")
        .and_then(Value::as_str)
        .map(|s| s == "ok")
}

fn tool_name(event: &Event) -> &str {
    event
        .payload
        .get("tool")
        .and_then(Value::as_str)
        .unwrap_or("unknown")
}

fn error_message(event: &Event) -> &str {
    event
        .payload
        .get("error")
        .and_then(Value::as_str)
        .unwrap_or("error")
}

fn changed_arg_keys(failed: &Event, succeeded: &Event) -> Vec<String> {
    let empty = serde_json::Map::new();
    let get_args = |e: &Event| -> serde_json::Map<String, Value> {
        e.payload
            .get("args")
            .and_then(Value::as_object)
            .cloned()
            .unwrap_or(empty.clone())
    };
    let a = get_args(failed);
    let b = get_args(succeeded);
    let mut keys: Vec<String> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .cloned()
        .collect();
    keys.sort();
    keys.dedup();
    keys
}
