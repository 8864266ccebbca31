//! Seed derivation for independent, order-free random streams.
//!
//! Every stream (client jitter, partitioning, agent sampling, ...) is keyed by
//! a tuple of integers mixed into the global seed, so results never depend on
//! the order in which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `parts` into `base`, one splitmix round per part.
pub fn derive(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(base: u64, parts: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive(base, parts))
}

/// Stream tags, so streams for different purposes never collide.
pub mod stream {
    pub const SELECT: u64 = 1;
    pub const ASSESS: u64 = 2;
    pub const LOCAL: u64 = 3;
    pub const DRIFT: u64 = 4;
    pub const PPO1: u64 = 5;
    pub const PPO2: u64 = 6;
    pub const INIT: u64 = 7;
    pub const DATA: u64 = 8;
    pub const PROFILE: u64 = 9;
}
