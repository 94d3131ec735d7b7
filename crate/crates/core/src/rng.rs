//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed with the
//! ChaCha stream id selecting an independent sequence. Both the algorithm
//! and the word order are fixed, so a `(seed, stream)` pair yields the same
//! draws on every platform.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream-id domains. The top byte of a stream id names its purpose so that
/// draws for initialization, shuffling, dropout and augmentation never share
/// a sequence.
pub mod domain {
    pub const INIT: u64 = 0x01 << 56;
    pub const SHUFFLE: u64 = 0x02 << 56;
    pub const DROPOUT: u64 = 0x03 << 56;
    pub const AUGMENT: u64 = 0x04 << 56;
    pub const SYNTH: u64 = 0x05 << 56;
    pub const SPLIT: u64 = 0x06 << 56;
    pub const GRADCHECK: u64 = 0x07 << 56;
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform draw in the closed interval `[lo, hi]`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.rng.random_range(lo..=hi)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.rng.random_range(0..=i);
            items.swap(i, j);
        }
    }
}
