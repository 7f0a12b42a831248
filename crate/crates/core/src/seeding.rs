//! Counter-based seed derivation. Every random draw is a pure function of
//! its key, so execution order never changes results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Hashes a sequence of labelled parts into a 64-bit key.
pub fn derive(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn derive_u64s(parts: &[u64]) -> u64 {
    let bytes: Vec<[u8; 8]> = parts.iter().map(|p| p.to_le_bytes()).collect();
    let refs: Vec<&[u8]> = bytes.iter().map(|b| b.as_slice()).collect();
    derive(&refs)
}

/// Uniform draw in [0, 1) keyed by `parts`.
pub fn unit_draw(parts: &[u64]) -> f64 {
    ChaCha8Rng::seed_from_u64(derive_u64s(parts)).random::<f64>()
}
