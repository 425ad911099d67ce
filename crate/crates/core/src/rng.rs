//! Seeded random streams.
//!
//! All randomness in the crate flows from [`SplitMix64`] (64-bit state,
//! version 1 of the stream layout). Child streams are derived by hashing a
//! parent seed with a stream tag and an index, so the same seed reproduces
//! the same data on every platform.

use rand::SeedableRng;
pub use rand_xoshiro::SplitMix64;

/// Stream layout version; bump when the derivation below changes.
pub const RNG_STREAM_VERSION: u32 = 1;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `(seed, tag, index)`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let a = mix(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let b = mix(a ^ tag.wrapping_mul(0xd6e8_feb8_6659_fd93));
    mix(b ^ index.wrapping_mul(0xa076_1d64_78bd_642f))
}

pub fn stream(seed: u64, tag: u64, index: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(derive_seed(seed, tag, index))
}

// Stream tags.
pub(crate) const TAG_SCENARIO: u64 = 1;
pub(crate) const TAG_NOISE: u64 = 2;
pub(crate) const TAG_INIT: u64 = 3;
pub(crate) const TAG_SHUFFLE: u64 = 4;
pub(crate) const TAG_AUGMENT: u64 = 5;
pub(crate) const TAG_CLUTTER: u64 = 6;
