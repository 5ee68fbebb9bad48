//! Seeded random streams.
//!
//! Every generator in this crate draws from ChaCha8, a counter-based stream
//! cipher. A base seed selects the key (expanded with `SeedableRng::seed_from_u64`,
//! i.e. PCG32 key expansion) and each trial gets its own 64-bit ChaCha stream
//! id. Trial `i` therefore sees the same numbers no matter how many trials run
//! before it, or on which thread.
//!
//! Gaussian draws use `rand_distr::StandardNormal` (ziggurat) and uniform draws
//! use `rand_distr::Uniform`. Byte-level reproducibility is promised only for
//! this implementation and these crate versions; the statistical behavior is
//! what other implementations should match.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

pub type StreamRng = ChaCha8Rng;

/// Seed for trial `trial` of an experiment with base seed `seed`.
///
/// SplitMix64 finalizer over the pair, so neighbouring trials get unrelated
/// keys and the result does not depend on scheduling.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed ^ trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent substream `index` of the base `seed`.
pub fn substream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Nested substream, for generators that need a second level of splitting
/// (e.g. the speech and noise sources of one scene).
pub fn substream2(seed: u64, index: u64, lane: u64) -> StreamRng {
    // Mix the lane into the key so (index, lane) pairs never alias.
    let key = seed ^ lane.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    substream(key, index)
}

pub fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_vec(rng: &mut StreamRng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| std * normal(rng)).collect()
}

pub fn uniform_vec(rng: &mut StreamRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let dist = Uniform::new_inclusive(lo, hi);
    (0..n).map(|_| dist.sample(rng)).collect()
}

pub fn uniform(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    Uniform::new(lo, hi).sample(rng)
}
