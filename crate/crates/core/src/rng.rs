//! Seed derivation.
//!
//! Every random draw descends from one 64-bit master seed:
//!
//! * trial `i` uses the path seed `mix(master, i)`;
//! * matrix element `(k, l)`, `k <= l`, of a path draws from its own
//!   ChaCha8 stream seeded with `mix(path_seed, k << 32 | l)`;
//! * within an element stream the mode coefficients are drawn in the order
//!   `a_1, b_1, a_2, b_2, ..., a_M, b_M`.
//!
//! Element streams do not depend on `N`, so the leading `n x n` block of a
//! path is the same for every `N >= n` sharing the seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combine a parent seed with a child key.
pub fn mix(parent: u64, key: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ key.wrapping_mul(GOLDEN).rotate_left(17))
}

pub fn trial_seed(master: u64, trial_index: u64) -> u64 {
    mix(master, trial_index)
}

pub fn element_rng(path_seed: u64, k: usize, l: usize) -> ChaCha8Rng {
    let key = ((k as u64) << 32) | l as u64;
    ChaCha8Rng::seed_from_u64(mix(path_seed, key))
}
