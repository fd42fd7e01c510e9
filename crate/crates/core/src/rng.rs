//! Seeded randomness.
//!
//! [`Rng`] wraps PCG-XSH-RR 64/32 (`rand_pcg::Pcg32`): 64 bits of LCG state
//! with a permuted 32-bit output. The same seed always yields the same
//! stream. The algorithm is part of the checkpoint determinism contract and
//! must not change without bumping file versions.

use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg32;

use crate::tensor::Mat;

/// Lower clamp applied to uniforms before the Gumbel transform.
pub const GUMBEL_EPS: f64 = 1e-20;

/// Largest `f64` strictly below one. `1 - 1e-20` rounds to exactly 1.0, so
/// the upper clamp falls back to this value.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Clone, Debug)]
pub struct Rng {
    inner: Pcg32,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            inner: Pcg32::seed_from_u64(seed),
        }
    }

    /// Derives an independent generator, e.g. one per worker or per block.
    pub fn fork(&mut self) -> Rng {
        Rng::new(self.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform01(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform(&mut self, lo: f32, hi: f32) -> f32 {
        let u = self.uniform01();
        (f64::from(lo) + (f64::from(hi) - f64::from(lo)) * u) as f32
    }

    pub fn uniform_mat(&mut self, rows: usize, cols: usize, lo: f32, hi: f32) -> Mat {
        let data = (0..rows * cols).map(|_| self.uniform(lo, hi)).collect();
        Mat::from_vec(rows, cols, data).expect("bounded uniforms are finite")
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn gumbel(&mut self) -> f32 {
        gumbel_from_uniform(self.uniform01())
    }
}

/// `-log(-log(u))` with `u` clamped into `[1e-20, 1)` so the result is
/// always finite.
pub fn gumbel_from_uniform(u: f64) -> f32 {
    let u = if u.is_nan() { 0.5 } else { u.clamp(GUMBEL_EPS, BELOW_ONE) };
    (-(-u.ln()).ln()) as f32
}

/// A `rows x cols` matrix of independent standard Gumbel samples.
pub fn sample_gumbel(rng: &mut Rng, rows: usize, cols: usize) -> Mat {
    let data = (0..rows * cols).map(|_| rng.gumbel()).collect();
    Mat::from_vec(rows, cols, data).expect("clamped Gumbel samples are finite")
}
