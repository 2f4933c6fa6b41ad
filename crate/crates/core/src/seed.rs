//! Sub-seed derivation.
//!
//! A sub-seed is `splitmix64(seed ^ splitmix64(index))`, using the SplitMix64
//! finalizer (Steele, Lea & Flood 2014). Streams are then drawn from
//! `ChaCha8Rng::seed_from_u64(sub_seed)`. Values are stable across platforms
//! and releases of this crate but are not meant to match other tools.

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the `index`-th child stream of `seed`.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}
