//! Feature-hashed text embeddings.
//!
//! Deterministic and dependency-free: token counts hashed into a fixed
//! number of buckets, L2-normalized. Adequate for desk-scale retrieval;
//! the retrieval interface accepts any unit-norm embedding, so real
//! embedders can be substituted.

/// Embedding dimensionality.
pub const EMBED_DIM: usize = 256;

/// Embed text as L2-normalized hashed token counts.
///
/// Deterministic: equal strings embed identically. Token-disjoint strings
/// land in disjoint buckets (collisions permitting), giving near-zero
/// cosine similarity.
pub fn embed(text: &str) -> Vec<f64> {
    assert!(!text.is_empty(), "text must be nonempty");
    let mut counts = vec![0.0f64; EMBED_DIM];
    for token in tokenize(text) {
        counts[bucket(&token)] += 1.0;
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm > 0.0 {
        for c in &mut counts {
            *c /= norm;
        }
    }
    counts
}

/// Cosine similarity of two same-dimension vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

fn bucket(token: &str) -> usize {
    // FNV-1a.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    (h % EMBED_DIM as u64) as usize
}
