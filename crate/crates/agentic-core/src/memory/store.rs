//! The three long-term stores and similarity retrieval.

use super::embed::{cosine, embed};
use super::{Insight, InsightOutcome, MemoryRecord, StoreKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

/// Semantic, episodic, and procedural records behind one index. Writes are
/// serialized through `&mut self`; readers share `&self` freely.
#[derive(Debug, Clone, Default)]
pub struct LongTermMemory {
    records: Vec<MemoryRecord>,
    text_hashes: BTreeSet<u64>,
}

/// Wire shape of one persisted record line.
#[derive(Debug, Serialize, Deserialize)]
pub struct StoreLine {
    pub store: StoreKind,
    pub text: String,
    pub embedding: Vec<f64>,
    pub outcome: InsightOutcome,
    pub tick: u64,
}

impl LongTermMemory {
    pub fn new() -> LongTermMemory {
        LongTermMemory::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[MemoryRecord] {
        &self.records
    }

    /// True if a record with exactly this text already exists.
    pub fn contains_text(&self, text: &str) -> bool {
        self.text_hashes.contains(&text_hash(text))
    }

    pub fn insert(&mut self, record: MemoryRecord) {
        self.text_hashes.insert(text_hash(&record.insight.text));
        self.records.push(record);
    }

    /// Embed an insight and store it.
    pub fn insert_insight(&mut self, store: StoreKind, insight: Insight, tick: u64) {
        let embedding = embed(&insight.text);
        self.insert(MemoryRecord {
            store,
            insight,
            embedding,
            created_at: tick,
        });
    }

    /// Top-`k` records by cosine similarity to the query, optionally
    /// restricted to one store. Ties break toward the most recent record.
    pub fn retrieve_similar(
        &self,
        store: Option<StoreKind>,
        query: &str,
        k: usize,
    ) -> Vec<(MemoryRecord, f64)> {
        if k == 0 || self.records.is_empty() || query.is_empty() {
            return Vec::new();
        }
        let query_vec = embed(query);
        let mut scored: Vec<(usize, f64)> = self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| store.is_none_or(|s| r.store == s))
            .map(|(i, r)| (i, cosine(&query_vec, &r.embedding)))
            .collect();
        scored.sort_by(|(ia, sa), (ib, sb)| {
            sb.partial_cmp(sa)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| {
                    let (ra, rb) = (&self.records[*ia], &self.records[*ib]);
                    rb.created_at
                        .cmp(&ra.created_at)
                        .then_with(|| ib.cmp(ia))
                })
        });
        scored
            .into_iter()
            .take(k)
            .map(|(i, s)| (self.records[i].clone(), s))
            .collect()
    }

    /// Append-only persistence: one JSON record per line.
    pub fn save_to(&self, path: &Path) -> std::io::Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for record in &self.records {
            let line = StoreLine {
                store: record.store,
                text: record.insight.text.clone(),
                embedding: record.embedding.clone(),
                outcome: record.insight.outcome,
                tick: record.created_at,
            };
            writeln!(file, "{}", serde_json::to_string(&line)?)?;
        }
        file.flush()
    }

    /// Rebuild the index from a record file written by [`save_to`].
    ///
    /// [`save_to`]: LongTermMemory::save_to
    pub fn load_from(path: &Path) -> std::io::Result<LongTermMemory> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut memory = LongTermMemory::new();
        for line in file.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: StoreLine = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            memory.insert(MemoryRecord {
                store: parsed.store,
                insight: Insight {
                    text: parsed.text,
                    utility_score: 0.5,
                    source_episode: String::new(),
                    outcome: parsed.outcome,
                },
                embedding: parsed.embedding,
                created_at: parsed.tick,
            });
        }
        Ok(memory)
    }
}

fn text_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn insight(text: &str) -> Insight {
        Insight {
            text: text.into(),
            utility_score: 0.5,
            source_episode: "ep".into(),
            outcome: InsightOutcome::Neutral,
        }
    }

    #[test]
    fn empty_store_retrieves_nothing() {
        let memory = LongTermMemory::new();
        assert!(memory.retrieve_similar(None, "anything", 3).is_empty());
    }

    #[test]
    fn self_retrieval_at_rank_one() {
        let mut memory = LongTermMemory::new();
        memory.insert_insight(StoreKind::Semantic, insight("use the read replica"), 1);
        memory.insert_insight(StoreKind::Semantic, insight("paginate large queries"), 2);
        let hits = memory.retrieve_similar(None, "use the read replica", 2);
        assert_eq!(hits[0].0.insight.text, "use the read replica");
        assert!((hits[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_one_matches_exhaustive_scan() {
        let mut memory = LongTermMemory::new();
        for (tick, text) in [
            "the api requires iso dates",
            "retry after authentication timeout",
            "always target the replica",
        ]
        .iter()
        .enumerate()
        {
            memory.insert_insight(StoreKind::Episodic, insight(text), tick as u64);
        }
        let query = "authentication timed out, what now";
        let hits = memory.retrieve_similar(None, query, 1);
        // Brute-force scan oracle.
        let qv = super::super::embed(query);
        let best = memory
            .records()
            .iter()
            .map(|r| cosine(&qv, &r.embedding))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((hits[0].1 - best).abs() < 1e-12);
    }

    #[test]
    fn ties_break_to_most_recent() {
        let mut memory = LongTermMemory::new();
        memory.insert_insight(StoreKind::Semantic, insight("identical text"), 1);
        memory.insert_insight(StoreKind::Semantic, insight("identical text"), 9);
        let hits = memory.retrieve_similar(None, "identical text", 2);
        assert_eq!(hits[0].0.created_at, 9);
    }

    #[test]
    fn store_filter_applies() {
        let mut memory = LongTermMemory::new();
        memory.insert_insight(StoreKind::Semantic, insight("fact one"), 1);
        memory.insert_insight(StoreKind::Procedural, insight("fact two"), 2);
        let hits = memory.retrieve_similar(Some(StoreKind::Procedural), "fact", 10);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].0.store, StoreKind::Procedural);
    }

    #[test]
    fn persistence_roundtrip() {
        let mut memory = LongTermMemory::new();
        memory.insert_insight(StoreKind::Semantic, insight("facts survive restarts"), 3);
        memory.insert_insight(StoreKind::Procedural, insight("step one then step two"), 4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        memory.save_to(&path).unwrap();
        let loaded = LongTermMemory::load_from(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        let hits = loaded.retrieve_similar(None, "facts survive restarts", 1);
        assert_eq!(hits[0].0.insight.text, "facts survive restarts");
        assert!((hits[0].1 - 1.0).abs() < 1e-12);
    }
}
