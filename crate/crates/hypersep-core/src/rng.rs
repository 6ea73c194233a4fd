//! Seeded RNG construction and substream derivation.
//!
//! Every random draw in the crate flows through a `ChaCha8Rng` built here.
//! Substreams use the ChaCha stream parameter, which guarantees
//! non-overlapping sequences for distinct (seed, stream) pairs; per-sample
//! augmentation streams pack (epoch, sample) into one stream id so work can
//! be distributed across threads without changing any draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent substream `stream` of the generator family named by `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for one sample in one epoch.
pub fn sample_stream(epoch: usize, sample: usize) -> u64 {
    debug_assert!(epoch < (1 << 31) && sample <= u32::MAX as usize);
    ((epoch as u64) << 32) | sample as u64
}

/// A fresh 64-bit seed drawn from the named substream; for components
/// that take a plain seed rather than a generator.
pub fn substream_seed(seed: u64, stream: u64) -> u64 {
    use rand::RngCore;
    substream(seed, stream).next_u64()
}

/// In-place Fisher-Yates shuffle.
///
/// Hand-rolled so the permutation depends only on the generator, not on the
/// rand crate's shuffle implementation details.
pub fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Uniform draw from `[lo, hi]`; returns `lo` when the interval is empty.
pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}
