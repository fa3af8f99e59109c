//! Deterministic random streams keyed by logical indices.
//!
//! Every consumer of randomness derives its own stream from the master seed
//! and a path of integers (meta-generation, task index, ...). Results never
//! depend on which thread ran what.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream tags, one per independent consumer.
pub mod tag {
    pub const INIT_PRIOR: u64 = 1;
    pub const PRIOR_OFFSPRING: u64 = 2;
    pub const TRAIN_SAMPLE: u64 = 3;
    pub const TEST_SAMPLE: u64 = 4;
    pub const TRAIN_QD: u64 = 5;
    pub const TEST_QD: u64 = 6;
    pub const DATASET: u64 = 7;
    pub const GRID_SPLIT: u64 = 8;
    pub const ABLATION_RUN: u64 = 9;
    pub const EVAL_SAMPLE: u64 = 10;
    pub const EVAL_QD: u64 = 11;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `path` into `master` to get a 64-bit key.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| {
        splitmix64(acc ^ splitmix64(p))
    })
}

pub fn stream(master: u64, path: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
