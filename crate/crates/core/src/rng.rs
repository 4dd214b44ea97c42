//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha stream keyed by a base seed
//! plus a stream tag, so independent consumers never share state and results
//! are reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags for the consumers inside one training run.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const INIT: u64 = 3;
    pub const AUGMENT: u64 = 4;
    pub const SYNTH: u64 = 5;
}

/// Independent stream `tag` under `seed`.
pub fn substream(seed: u64, tag: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// Derive a child seed from a parent stream, for nested decorrelated draws.
pub fn child_seed(seed: u64, tag: u64, index: u64) -> u64 {
    // splitmix64 over the mixed inputs
    let mut z = seed
        ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
