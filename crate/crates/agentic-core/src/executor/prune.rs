//! Attention-guided context cache pruning.
//!
//! Entries are evicted by ascending aggregate attention score (oldest
//! first on ties), never FIFO. Evicted content that passes the memory
//! module's utility filter is written to cold storage, where it remains
//! retrievable by similarity search.

use crate::memory::{is_low_utility_text, Insight, InsightOutcome, LongTermMemory, StoreKind};
use std::collections::VecDeque;

/// Number of recent generator calls aggregated into an entry's attention
/// score (mean over the window; never-attended entries score 0).
pub const ATTENTION_WINDOW: usize = 4;

/// One cached context entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextCacheEntry {
    pub token_id: u64,
    /// Position of the content in the memory context.
    pub content_ref: usize,
    /// Aggregate attention over the last [`ATTENTION_WINDOW`] calls.
    pub attention_score: f64,
    /// Ticks since the entry was cached.
    pub age: u64,
    /// Snapshot of the referenced content, for cold storage.
    pub content: String,
}

/// Evict down to `target_size` entries by ascending attention score,
/// breaking ties toward the oldest entry. Returns `(kept, evicted)`; kept
/// entries preserve their original order. Evicted content passing the
/// utility filter is written to the cold store.
pub fn prune_context(
    cache: Vec<ContextCacheEntry>,
    target_size: usize,
    cold_store: &mut LongTermMemory,
) -> (Vec<ContextCacheEntry>, Vec<ContextCacheEntry>) {
    let evict_count = cache.len().saturating_sub(target_size);
    if evict_count == 0 {
        return (cache, Vec::new());
    }
    let mut order: Vec<usize> = (0..cache.len()).collect();
    order.sort_by(|&a, &b| {
        cache[a]
            .attention_score
            .partial_cmp(&cache[b].attention_score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| cache[b].age.cmp(&cache[a].age))
            .then_with(|| cache[a].token_id.cmp(&cache[b].token_id))
    });
    let evicted_idx: std::collections::BTreeSet<usize> =
        order.into_iter().take(evict_count).collect();

    let mut kept = Vec::with_capacity(cache.len() - evict_count);
    let mut evicted = Vec::with_capacity(evict_count);
    for (i, entry) in cache.into_iter().enumerate() {
        if evicted_idx.contains(&i) {
            evicted.push(entry);
        } else {
            kept.push(entry);
        }
    }

    for entry in &evicted {
        if !entry.content.is_empty() && !is_low_utility_text(&entry.content) {
            let text = entry.content.clone();
            if !cold_store.contains_text(&text) {
                cold_store.insert_insight(
                    StoreKind::Episodic,
                    Insight {
                        text,
                        utility_score: 0.5,
                        source_episode: "context-eviction".into(),
                        outcome: InsightOutcome::Neutral,
                    },
                    entry.token_id,
                );
            }
        }
    }
    (kept, evicted)
}

/// Rolling attention bookkeeping over cached entries.
#[derive(Debug, Clone, Default)]
pub struct ContextCache {
    entries: Vec<ContextCacheEntry>,
    /// Per-entry score window, keyed by token id so it survives pruning.
    windows: std::collections::BTreeMap<u64, VecDeque<f64>>,
    next_token_id: u64,
    evictions: u64,
}

impl ContextCache {
    pub fn new() -> ContextCache {
        ContextCache::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ContextCacheEntry] {
        &self.entries
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }

    pub fn insert(&mut self, content_ref: usize, content: String) {
        self.entries.push(ContextCacheEntry {
            token_id: self.next_token_id,
            content_ref,
            attention_score: 0.0,
            age: 0,
            content,
        });
        self.windows.insert(self.next_token_id, VecDeque::new());
        self.next_token_id += 1;
    }

    /// Fold one generator call's attention scores (aligned to entry
    /// positions) into the rolling windows and advance ages.
    pub fn observe_attention(&mut self, scores: &[f64]) {
        for (i, entry) in self.entries.iter_mut().enumerate() {
            let window = self.windows.get_mut(&entry.token_id).expect("window exists");
            if let Some(score) = scores.get(i) {
                if window.len() == ATTENTION_WINDOW {
                    window.pop_front();
                }
                window.push_back(*score);
            }
            entry.attention_score = if window.is_empty() {
                0.0
            } else {
                window.iter().sum::<f64>() / window.len() as f64
            };
            entry.age += 1;
        }
    }

    /// Prune to the target size, sending useful evicted content to cold
    /// storage.
    pub fn prune(&mut self, target_size: usize, cold_store: &mut LongTermMemory) -> usize {
        let entries = std::mem::take(&mut self.entries);
        let (kept, evicted) = prune_context(entries, target_size, cold_store);
        for gone in &evicted {
            self.windows.remove(&gone.token_id);
        }
        self.entries = kept;
        self.evictions += evicted.len() as u64;
        evicted.len()
    }
}
