//! Seed expansion and counter-based hashing.
//!
//! A single top-level seed is expanded into independent per-component seeds,
//! and dropout masks are drawn from a stateless hash of
//! `(seed, site, row, position, unit)` so they do not depend on call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a component label.
pub fn derive(seed: u64, label: &str) -> u64 {
    label
        .bytes()
        .fold(mix64(seed), |acc, b| mix64(acc ^ u64::from(b)))
}

/// Derives a child seed from a parent seed and an integer index.
pub fn derive_index(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Hashes a tuple of counters into a uniform value in `[0, 1)`.
#[inline]
pub fn uniform_at(seed: u64, counters: [u64; 4]) -> f64 {
    let h = counters
        .iter()
        .fold(mix64(seed), |acc, &c| mix64(acc ^ c));
    // 53 high bits -> [0, 1)
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
