//! Seeded, counter-based random streams.
//!
//! Every random draw in the crate goes through [`stream`], which keys a
//! ChaCha8 generator by a 64-bit seed. Independent sub-streams (per restart,
//! per rank, per sequence, per epoch) are obtained with [`derive_seed`] so
//! results never depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator keyed by `seed`.
pub fn stream(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes `tag` into `seed` (splitmix64 finalizer), giving a decorrelated child seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(tag.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `derive_seed` applied over a path of tags.
pub fn derive_path(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(seed, |s, &t| derive_seed(s, t))
}
