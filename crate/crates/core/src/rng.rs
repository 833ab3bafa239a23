//! Portable seeded Gaussian stream: ChaCha20 keyed by a 64-bit seed, with the
//! basic Box–Muller transform. Every generated value in the crate goes through
//! here so that outputs are reproducible from seeds alone.

use std::f64::consts::TAU;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

/// Name recorded in run manifests next to the seed.
pub const GENERATOR_NAME: &str = "chacha20-boxmuller";

pub struct GaussianStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}
