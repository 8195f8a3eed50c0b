//! Seeded randomness.
//!
//! Every random draw in the crate comes from [`ChaCha8Rng`], a portable
//! counter-mode stream cipher generator whose output is identical on every
//! platform for a given 64-bit seed. Independent sub-streams (one per group,
//! per fold, per run) are derived from a base seed with a SplitMix64 mix so
//! that results do not depend on scheduling order.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Generator for a 64-bit seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Deterministically derives a child seed for `(stream, index)` under `base`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut x = splitmix64(base ^ splitmix64(stream.wrapping_add(0x6a09_e667_f3bc_c909)));
    x = splitmix64(x ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    x
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Named sub-stream tags.
pub(crate) mod stream {
    pub const GROUP_RUN: u64 = 1;
    pub const FOLD: u64 = 2;
    pub const SPLIT: u64 = 3;
}
