//! The pinned pseudo-random generator.
//!
//! Every stochastic step (weight init, shuffling, dropout masks, gradient
//! check subsampling) draws from `Xoshiro256PlusPlus` seeded through
//! SplitMix64 (`SeedableRng::seed_from_u64`). Independent streams are
//! derived by mixing a base seed with a stream tag and a counter.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

/// Stream tags used when deriving sub-seeds.
pub mod stream {
    pub const INIT: u64 = 0x494e_4954;
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const DROPOUT: u64 = 0x4452_4f50;
    pub const GRADCHECK: u64 = 0x4743_484b;
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Generator for `(seed, tag, counter)`; distinct triples give unrelated streams.
pub fn derived(seed: u64, tag: u64, counter: u64) -> Rng {
    let mut h = seed ^ tag.rotate_left(32);
    h = splitmix(h);
    h ^= counter;
    Rng::seed_from_u64(splitmix(h))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
