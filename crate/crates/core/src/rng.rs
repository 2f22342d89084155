//! Seeded random number generation.
//!
//! All randomness in the crate flows through [`Rng`] so that a run is fully
//! determined by its seeds. The generator is ChaCha with 8 rounds, a fixed
//! published algorithm, so a seed produces the same stream on every platform
//! and in every build. Floating-point draws use an explicit 53-bit mapping
//! rather than a library distribution, so the u64-to-f64 path is pinned here.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor2D;

pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / ((1u64 << 53) as f64))
    }

    /// Standard normal draw via the Box-Muller transform. The second value
    /// of each pair is discarded to keep the generator state one draw wide.
    pub fn next_normal(&mut self) -> f64 {
        // u1 is shifted away from 0 so ln(u1) is finite.
        let u1 = (self.next_f64()).max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Tensor of independent draws from `Uniform[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64, rows: usize, cols: usize) -> Result<Tensor2D> {
        // The negation also rejects NaN bounds.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(lo < hi) {
            return Err(Error::Parameter(format!(
                "uniform bounds must satisfy lo < hi, got lo={lo}, hi={hi}"
            )));
        }
        let mut t = Tensor2D::zeros(rows, cols);
        for v in t.data_mut() {
            *v = lo + self.next_f64() * (hi - lo);
        }
        Ok(t)
    }

    /// 0/1 mask where each entry is 1 with probability `keep_prob`.
    pub fn bernoulli_mask(&mut self, keep_prob: f64, rows: usize, cols: usize) -> Result<Tensor2D> {
        if !(0.0..=1.0).contains(&keep_prob) {
            return Err(Error::Parameter(format!(
                "keep_prob must lie in [0, 1], got {keep_prob}"
            )));
        }
        let mut t = Tensor2D::zeros(rows, cols);
        for v in t.data_mut() {
            *v = if self.next_f64() < keep_prob { 1.0 } else { 0.0 };
        }
        Ok(t)
    }

    /// Uniform index in `0..n`. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0) is undefined");
        (self.next_u64() % n as u64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// Mixes a base seed with stream coordinates into an independent seed, so
/// sub-tasks (folds, repeated runs, search trials) get their own streams.
/// SplitMix64 finalizer folded over the coordinates.
pub fn derive_seed(base: u64, stream: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    let mut z = mix(base);
    for &w in stream {
        z = mix(z ^ mix(w));
    }
    z
}
