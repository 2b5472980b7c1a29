//! Deterministic seed derivation.
//!
//! Every random stream in a run descends from one root seed. Stages get their
//! own seed through [`derive`], and parallel work items inside a stage use the
//! ChaCha stream selector so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage labels used when splitting the root seed.
pub mod stage {
    pub const TABLE: u64 = 1;
    pub const SIM_TEMPLATE: u64 = 2;
    pub const SIM_SPIKES: u64 = 3;
    pub const SIM_IP: u64 = 4;
    pub const SIM_CONTROL: u64 = 5;
    pub const REPLICATE: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `parent` for the given label.
pub fn derive(parent: u64, label: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ label.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// RNG for work item `index` of a stage seeded with `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
