//! Deterministic derivation of independent RNG streams.
//!
//! Every source of randomness in a run is seeded from `(master seed, domain,
//! index)` rather than drawn from one sequential stream. This makes single
//! episodes and single sweep cells replayable in isolation and keeps results
//! independent of scheduling when cells run in parallel.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains, kept distinct so that e.g. episode 3's rollout noise never
/// collides with decision 3's bootstrap draws.
pub mod domains {
    pub const EPISODE: u64 = 0xE1;
    pub const SPLIT: u64 = 0x51;
    pub const CANDIDATE: u64 = 0xC4;
    pub const SAFETY: u64 = 0x5A;
    pub const SWEEP_CELL: u64 = 0x5C;
}

/// SplitMix64 finalizer; a well-mixed 64-bit permutation.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Mixes `(master, domain, index)` into a stream seed.
pub fn mix(master: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ domain) ^ index)
}

/// Factory handing out independent, reproducible streams for one run.
#[derive(Debug, Clone, Copy)]
pub struct StreamFactory {
    master: u64,
}

impl StreamFactory {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn stream(&self, domain: u64, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(self.master, domain, index))
    }
}
