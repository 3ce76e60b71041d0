//! Seed derivation. Every randomized component draws from its own ChaCha
//! stream derived from one master seed, so runs are reproducible per stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed for `stream` (e.g. a subsystem tag or worker id).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub fn rng_for(seed: u64, stream: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Stream tags for the per-subsystem seeds expanded from a master seed.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const COARSEN: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const PARTITION: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const INIT: u64 = 6;
}
