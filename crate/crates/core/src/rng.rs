//! Deterministic RNG stream derivation.
//!
//! All randomness in the toolkit flows from a single master seed through
//! named sub-streams, so independent stages (phantom generation, noise,
//! augmentation, weight init, ...) stay reproducible and decoupled: adding
//! draws to one stream never perturbs another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a 64-bit hash; stable across platforms and releases, unlike the
/// std hasher.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive the seed for a named sub-stream of `master`.
pub fn stream_seed(master: u64, name: &str) -> u64 {
    splitmix(master ^ fnv1a(name.as_bytes()))
}

/// Derive the seed for an indexed item within a named sub-stream
/// (e.g. per-volume noise in a dataset).
pub fn indexed_seed(master: u64, name: &str, index: u64) -> u64 {
    splitmix(stream_seed(master, name) ^ splitmix(index.wrapping_add(1)))
}

/// RNG for a named sub-stream.
pub fn stream_rng(master: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, name))
}

/// RNG for an indexed item within a named sub-stream.
pub fn indexed_rng(master: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(indexed_seed(master, name, index))
}
