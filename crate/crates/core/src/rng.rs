//! Seeded pseudo-random numbers.
//!
//! The generator is ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded through
//! `SeedableRng::seed_from_u64`. Both the block function and the seed
//! expansion are fixed by their crates' stability guarantees, and floats are
//! produced from raw 64-bit words here rather than through `rand`'s
//! distribution code, so a seed yields the same stream on every platform.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        loop {
            let v = lo + (hi - lo) * self.next_f64();
            // Rounding can land exactly on `hi` when the span is tiny.
            if v < hi {
                return v;
            }
        }
    }

    /// Uniform integer on `0..n` without modulo bias.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Child generator seeded from this stream.
    pub fn fork(&mut self) -> Rng {
        Rng::new(self.next_u64())
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Tensor of independent draws from `[lo, hi)`.
pub fn seeded_uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Result<Tensor> {
    if !(lo < hi) {
        return Err(Error::invalid(format!(
            "seeded_uniform needs lo < hi, got [{lo}, {hi})"
        )));
    }
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.uniform(lo, hi)).collect();
    Tensor::new(shape.to_vec(), data)
}
