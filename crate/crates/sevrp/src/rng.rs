//! Deterministic named random streams.
//!
//! All randomness flows from a single root seed; each component draws from
//! its own stream so that, for example, adding scenario sampling never shifts
//! the perturbation sequence.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// A reproducible generator for the stream `name` under the root `seed`.
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a(name.as_bytes()).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// A derived root seed for the `idx`-th run of the stream `name`, for
/// components that launch whole sub-searches (one per scenario, say).
pub fn subseed(seed: u64, name: &str, idx: u64) -> u64 {
    let mut h = seed ^ fnv1a(name.as_bytes()) ^ idx.wrapping_mul(0x9e3779b97f4a7c15);
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58476d1ce4e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d049bb133111eb);
    h ^ (h >> 31)
}
