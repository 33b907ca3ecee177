//! Seed derivation.
//!
//! Every random draw in a drop comes from a ChaCha stream whose seed is derived
//! from the root seed and a counter, so results do not depend on the order in
//! which drops or SAPs are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed number `index` of `parent`.
pub fn child_seed(parent: u64, index: u64) -> u64 {
    mix(parent ^ mix(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named sub-streams used inside a single drop.
pub mod stream {
    pub const SCENE: u64 = 0;
    pub const TARGET_COUNT: u64 = 1;
    /// Per-SAP symbol stream is `SYMBOLS + 2 * sap_id`, noise is `NOISE + 2 * sap_id`.
    pub const SYMBOLS: u64 = 16;
    pub const NOISE: u64 = 17;
}
