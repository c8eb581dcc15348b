//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] whose seed is
//! derived from a user seed plus a purpose tag, so independent consumers
//! (shards, replications, multistart chains) never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags mixed into derived seeds.
pub mod tag {
    pub const SAMPLE: u64 = 0x5341_4d50;
    pub const SPLIT: u64 = 0x5350_4c54;
    pub const SHARD: u64 = 0x5348_5244;
    pub const KMEANSPP: u64 = 0x4b4d_5050;
    pub const KLAVG: u64 = 0x4b4c_4156;
    pub const SIMGEN: u64 = 0x5349_4d47;
    pub const OVERLAP: u64 = 0x4f56_4c50;
    pub const REPLICATION: u64 = 0x5245_504c;
    pub const MODEL: u64 = 0x4d4f_444c;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a sequence of tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(seed: u64, tags: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, tags))
}
