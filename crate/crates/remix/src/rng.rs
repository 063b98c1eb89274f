//! Seeded random streams.
//!
//! Every stochastic component draws from its own stream, derived from the
//! run seed and a fixed tag. Components therefore never share generator
//! state, and adding draws to one component cannot shift the values another
//! one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags for the independent random consumers of a run.
pub mod stream {
    /// Subsampling a balanced pool down to the imbalanced class sizes.
    pub const SUBSAMPLE: u64 = 1;
    /// Training-set generation (toy datasets).
    pub const TRAIN_DATA: u64 = 2;
    /// Evaluation-set generation (toy datasets).
    pub const EVAL_DATA: u64 = 3;
    /// Model parameter initialization.
    pub const MODEL_INIT: u64 = 4;
    /// Everything the training loop draws: shuffles, pairings, mixing.
    pub const TRAIN_LOOP: u64 = 5;
}

/// Deterministic RNG for one component of a run.
///
/// The seed and tag are mixed through SplitMix64 so that nearby run seeds
/// still yield unrelated streams.
pub fn stream_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(
        seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15),
    ))
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
