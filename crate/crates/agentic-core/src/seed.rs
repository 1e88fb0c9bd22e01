//! Labeled seed derivation.
//!
//! All randomness flows from one root seed through named sub-seeds, so
//! reproducibility survives module boundaries and reordered work.

use sha2::{Digest, Sha256};

/// Derive a named sub-seed from a root seed.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// Derive an indexed sub-seed (`label[i]`).
pub fn derive_seed_indexed(root: u64, label: &str, index: u64) -> u64 {
    derive_seed(root, &format!("{label}[{index}]"))
}
