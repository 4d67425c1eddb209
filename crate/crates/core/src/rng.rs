//! Seeded randomness shared by training and pair sampling.
//!
//! Every generator is a ChaCha8 stream keyed by `seed_from_u64(seed)`.
//! Shuffles are the descending Fisher–Yates variant: for `i` from `n - 1`
//! down to `1`, swap `i` with `gen_range(0..=i)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Generator = ChaCha8Rng;

pub fn seeded(seed: u64) -> Generator {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for pair sampling in one batch: keyed by `pair_seed`, stream
/// `(epoch << 32) | batch_index`.
pub fn batch_stream(pair_seed: u64, epoch: usize, batch_index: usize) -> Generator {
    let mut rng = seeded(pair_seed);
    rng.set_stream(((epoch as u64) << 32) | (batch_index as u64 & 0xffff_ffff));
    rng
}

pub fn shuffle<T>(items: &mut [T], rng: &mut Generator) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

/// Uniform draw in `[-bound, bound)`.
pub fn uniform_symmetric(rng: &mut Generator, bound: f64) -> f64 {
    (2.0 * rng.gen::<f64>() - 1.0) * bound
}
