//! The bounded event stream, consolidation into long-term stores, and
//! embedding-based retrieval.
//!
//! Raw experience accumulates in a token-bounded stream. Before the stream
//! would overflow, a consolidation pass segments it into episodes, extracts
//! the insights worth keeping, embeds and stores them, and replaces the
//! processed span with a compressed summary.

mod consolidate;
mod embed;
mod store;

pub use consolidate::{
    consolidate, extract_insights, is_low_utility_text, route_insight, segment_episodes,
    ConsolidationReport, Span,
};
pub use embed::{cosine, embed, EMBED_DIM};
pub use store::{LongTermMemory, StoreLine};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Raised when a single event cannot fit in the stream at all.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("event of {event_tokens} tokens exceeds stream capacity {capacity_tokens}")]
pub struct OversizeEvent {
    pub event_tokens: u64,
    pub capacity_tokens: u64,
}

/// Kind of a short-term event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    UserEvent,
    ToolCallEvent,
    SystemLog,
}

/// One immutable entry of the event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub payload: Value,
    pub tick: u64,
    pub token_cost: u64,
}

impl Event {
    pub fn user(tick: u64, text: &str) -> Event {
        Event {
            kind: EventKind::UserEvent,
            payload: serde_json::json!({ "text": text }),
            tick,
            token_cost: text.split_whitespace().count().max(1) as u64,
        }
    }

    /// A tool call with its outcome. `error` is `None` for successes.
    pub fn tool_call(tick: u64, tool: &str, args: Value, error: Option<&str>) -> Event {
        let payload = match error {
            Some(message) => serde_json::json!({
                "tool": tool, "args": args, "status": "error", "error": message
            }),
            None => serde_json::json!({ "tool": tool, "args": args, "status": "ok" }),
        };
        Event {
            kind: EventKind::ToolCallEvent,
            payload,
            tick,
            token_cost: 8,
        }
    }

    pub fn system_log(tick: u64, level: &str, message: &str) -> Event {
        Event {
            kind: EventKind::SystemLog,
            payload: serde_json::json!({ "level": level, "message": message }),
            tick,
            token_cost: message.split_whitespace().count().max(1) as u64,
        }
    }

    /// Error-severity system log, used for episode boundary detection.
    pub fn is_error_log(&self) -> bool {
        self.kind == EventKind::SystemLog
            && self.payload.get("level").and_then(Value::as_str) == Some("error")
    }

    /// Summary events are produced by context compression and are skipped
    /// by future insight extraction.
    pub fn is_summary(&self) -> bool {
        self.kind == EventKind::SystemLog && self.payload.get("summary").is_some()
    }
}

/// Store a consolidated insight lands in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreKind {
    Semantic,
    Episodic,
    Procedural,
}

/// Episode outcome attached to an insight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsightOutcome {
    Success,
    Failure,
    Neutral,
}

/// A salient observation extracted from an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Insight {
    pub text: String,
    /// In [0, 1], per the retention scoring rule.
    pub utility_score: f64,
    pub source_episode: String,
    pub outcome: InsightOutcome,
}

/// A consolidated record in one of the three long-term stores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub store: StoreKind,
    pub insight: Insight,
    /// Unit-L2-norm embedding of the insight text.
    pub embedding: Vec<f64>,
    pub created_at: u64,
}

/// Result of replacing a span with its compressed summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedSummary {
    pub text: String,
    /// Number of leading events that were replaced.
    pub replaced_len: usize,
    pub token_cost: u64,
    pub freed_tokens: u64,
}

/// A contiguous logical episode within the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub label: String,
    /// Index range into the segmented slice.
    pub start: usize,
    pub end: usize,
    pub events: Vec<Event>,
}

/// Token-bounded short-term memory.
#[derive(Debug, Clone)]
pub struct EventStream {
    events: Vec<Event>,
    capacity_tokens: u64,
}

/// Consolidation fires when an append would push consumption past this
/// fraction of capacity, keeping headroom between passes.
const CONSOLIDATION_TRIGGER: f64 = 0.9;

impl EventStream {
    pub fn new(capacity_tokens: u64) -> EventStream {
        assert!(capacity_tokens > 0);
        EventStream {
            events: Vec::new(),
            capacity_tokens,
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn capacity_tokens(&self) -> u64 {
        self.capacity_tokens
    }

    pub fn total_tokens(&self) -> u64 {
        self.events.iter().map(|e| e.token_cost).sum()
    }

    pub fn last_tick(&self) -> Option<u64> {
        self.events.last().map(|e| e.tick)
    }

    /// Append an event, consolidating the oldest half of the stream first
    /// when the append would cross the trigger threshold. After any
    /// successful append the stream holds at most `capacity_tokens`.
    pub fn append_event(
        &mut self,
        event: Event,
        stores: &mut LongTermMemory,
    ) -> Result<Option<ConsolidationReport>, OversizeEvent> {
        if let Some(last) = self.last_tick() {
            assert!(event.tick > last, "event ticks must be strictly increasing");
        }
        if event.token_cost > self.capacity_tokens {
            return Err(OversizeEvent {
                event_tokens: event.token_cost,
                capacity_tokens: self.capacity_tokens,
            });
        }
        let trigger = (self.capacity_tokens as f64 * CONSOLIDATION_TRIGGER) as u64;
        let mut report = None;
        if self.total_tokens() + event.token_cost > trigger {
            report = Some(consolidate(self, stores, Span::OldestHalf));
            // Compression is bounded below by the placeholder summary; if
            // the append still does not fit, evict oldest entries outright.
            while self.total_tokens() + event.token_cost > self.capacity_tokens
                && !self.events.is_empty()
            {
                self.events.remove(0);
            }
        }
        self.events.push(event);
        debug_assert!(self.total_tokens() <= self.capacity_tokens);
        Ok(report)
    }

    /// Replace the first `span_len` events with one summary event carrying
    /// the retained insight texts. Compression is strict: the summary
    /// always costs less than the span it replaces.
    pub fn compress_prefix(&mut self, span_len: usize, retained: &[Insight]) -> CompressedSummary {
        assert!(span_len > 0 && span_len <= self.events.len());
        let span_cost: u64 = self.events[..span_len].iter().map(|e| e.token_cost).sum();
        let span_ticks = self.events[span_len - 1].tick;

        let text = if retained.is_empty() {
            format!("[summary of {span_len} events]")
        } else {
            let body: Vec<&str> = retained.iter().map(|i| i.text.as_str()).collect();
            format!("[summary of {span_len} events] {}", body.join("; "))
        };
        // Header floor of 10 tokens plus the retained text, capped below
        // the span cost to keep compression strict.
        let raw_cost = 10 + retained
            .iter()
            .map(|i| i.text.split_whitespace().count() as u64)
            .sum::<u64>();
        let token_cost = raw_cost.min(span_cost.saturating_sub(1)).max(1);

        let summary_event = Event {
            kind: EventKind::SystemLog,
            payload: serde_json::json!({ "summary": text, "replaced": span_len }),
            tick: span_ticks,
            token_cost,
        };
        self.events.splice(..span_len, [summary_event]);
        CompressedSummary {
            text,
            replaced_len: span_len,
            token_cost,
            freed_tokens: span_cost - token_cost,
        }
    }
}
