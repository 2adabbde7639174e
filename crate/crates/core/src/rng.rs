//! Seed derivation.
//!
//! Every sampler takes a `u64` seed. Independent sub-streams (replicates,
//! restarts, population blocks) are obtained from ChaCha's 64-bit stream
//! counter rather than by hashing seeds together, so `stream(seed, i)` and
//! `stream(seed, j)` never overlap for `i != j`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for stream 0 of `seed`.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for the `stream`-th independent sub-stream of `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A derived `u64` seed for nested samplers that only accept a seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, index.wrapping_add(1)).next_u64()
}
