//! Stable seed derivation.
//!
//! `std`'s hashers are not stable across releases, so keyed seeds go through
//! SHA-256 to keep generated corpora byte-identical between builds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn seed_from_key(key: &str) -> u64 {
    let digest = Sha256::digest(key.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Child seed for stream `index` of a parent seed.
pub fn derive(parent: u64, label: &str, index: u64) -> u64 {
    seed_from_key(&format!("{parent}/{label}/{index}"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
