//! Seed derivation. Every random stream in the crate is a `ChaCha8Rng`
//! seeded from a root seed plus a stream tag and an index, so parallel
//! workers never share state and results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags, one per consumer of randomness.
pub mod stream {
    pub const SYNTH: u64 = 0x5359_4e54;
    pub const FOREST: u64 = 0x464f_5245;
    pub const SAMPLER: u64 = 0x5341_4d50;
    pub const INSTANCE: u64 = 0x494e_5354;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(root) ^ stream) ^ index)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
