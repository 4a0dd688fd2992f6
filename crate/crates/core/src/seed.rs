//! Counter-based seed derivation.
//!
//! Every random stream in an experiment is addressed by a path of integer
//! tags below a single master seed: `derive(master, &[stream, a, b, ...])`.
//! Each tag is folded in with a SplitMix64 finalizer, so a stream's seed
//! depends only on the master seed and its own path. Any sweep cell can be
//! regenerated in isolation without replaying the rest of the sweep.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Stream tags used by the experiment pipeline.
pub mod stream {
    pub const TRAIN_STATES: u64 = 1;
    pub const TRAIN_NOISE: u64 = 2;
    pub const VAL_STATES: u64 = 3;
    pub const VAL_NOISE: u64 = 4;
    pub const TEST_STATES: u64 = 5;
    pub const TEACHER_BIAS: u64 = 6;
    pub const TEACHER_SAMPLES: u64 = 7;
    pub const TRAINING: u64 = 8;
    pub const DRIFT_POINTS: u64 = 9;
    pub const NOISE_CALIBRATION: u64 = 10;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a tag path.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &tag| splitmix64(acc ^ splitmix64(tag)))
}

/// Generator seeded from a derived seed.
pub fn rng_for(master: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive(master, path))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
