//! Seeded random streams. Every consumer derives its own stream from the run
//! seed plus a purpose tag and indices, so resuming or reordering work never
//! shifts another consumer's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn mix(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn stream(seed: u64, parts: &[u64]) -> Rng {
    Rng::seed_from_u64(mix(seed, parts))
}

/// Purpose tags for [`stream`].
pub mod tag {
    pub const INIT: u64 = 1;
    pub const RESET: u64 = 2;
    pub const ROBOT: u64 = 3;
    pub const HUMAN: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const BATCH: u64 = 6;
    pub const NOISE: u64 = 7;
    pub const ROLLOUT: u64 = 8;
    pub const SPLIT: u64 = 9;
    pub const CALIBRATE: u64 = 10;
}
