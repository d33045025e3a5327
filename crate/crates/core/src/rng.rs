//! Seeded noise generation.
//!
//! Streams are produced by xoshiro256++ seeded through SplitMix64
//! (`SeedableRng::seed_from_u64`). Uniforms take the top 53 bits of each
//! 64-bit output, and Gaussian pairs use the Box–Muller transform, so the
//! exact sample stream can be reproduced from the algorithm description
//! alone.

use num_complex::Complex64;
use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use std::f64::consts::TAU;

/// Portable seeded generator for uniforms, phases and complex Gaussian noise.
#[derive(Debug, Clone)]
pub struct NoiseRng {
    inner: Xoshiro256PlusPlus,
}

impl NoiseRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform phase on [0, 2π).
    pub fn phase(&mut self) -> f64 {
        TAU * self.uniform()
    }

    /// A pair of independent standard normals (Box–Muller).
    pub fn standard_normal_pair(&mut self) -> (f64, f64) {
        // 1 - u lies in (0, 1], keeping the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = TAU * u2;
        (radius * angle.cos(), radius * angle.sin())
    }

    /// Circularly symmetric complex Gaussian with total variance `variance`.
    pub fn complex_gaussian(&mut self, variance: f64) -> Complex64 {
        let scale = (0.5 * variance).sqrt();
        let (re, im) = self.standard_normal_pair();
        Complex64::new(scale * re, scale * im)
    }
}

/// Deterministically derive a child seed from a master seed and a stream
/// path, independent of scheduling order.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &p in path {
        state = splitmix64(state ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    state
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
