//! Seeded randomness.
//!
//! Every random draw in the crate comes from a [`Stream`], which is ChaCha20
//! keyed through `SeedableRng::seed_from_u64` (the PCG32 key expansion in
//! `rand_core`). Both algorithms are fixed and platform independent, so a seed
//! reproduces the same stream everywhere.
//!
//! Independent sub-streams are derived with [`sub_seed`], a SplitMix64 mix of
//! the parent seed and a stream index.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Stream = ChaCha20Rng;

pub fn seeded_rng(seed: u64) -> Stream {
    ChaCha20Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th child stream of `seed`.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn sub_rng(seed: u64, index: u64) -> Stream {
    seeded_rng(sub_seed(seed, index))
}

/// Fixed stream indices so callers never collide.
pub mod streams {
    pub const HEAD_INIT: u64 = 1;
    pub const ENGINE_LOOP: u64 = 2;
    pub const SOS: u64 = 3;
    pub const BIAS_MIX: u64 = 4;
    pub const FOS: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const REGRESSOR: u64 = 7;
    pub const SYNTH_MOS: u64 = 8;
    pub const SYNTH_FEATURES: u64 = 9;
    pub const SYNTH_RATINGS: u64 = 10;
}
