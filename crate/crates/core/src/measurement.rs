//! Seeded Gaussian random projection `Φ` and observation synthesis.

use std::sync::OnceLock;

use crate::error::{ensure_finite, invalid_input, Result};
use crate::linalg::{dot, norm2};
use crate::rng::{GaussianStream, GENERATOR_NAME};

/// An `m x n` projection with i.i.d. `N(0, 1/m)` entries drawn from
/// [`GaussianStream`] in row-major order.
///
/// `m == n` with seed 0 is reserved for the exact identity.
#[derive(Debug)]
pub struct MeasurementOperator {
    m: usize,
    n: usize,
    seed: u64,
    /// Row-major entries; `None` in identity mode.
    entries: Option<Vec<f64>>,
    spectral_norm: OnceLock<f64>,
}

impl Clone for MeasurementOperator {
    fn clone(&self) -> Self {
        let spectral_norm = OnceLock::new();
        if let Some(&s) = self.spectral_norm.get() {
            let _ = spectral_norm.set(s);
        }
        Self {
            m: self.m,
            n: self.n,
            seed: self.seed,
            entries: self.entries.clone(),
            spectral_norm,
        }
    }
}

impl MeasurementOperator {
    pub fn new(m: usize, n: usize, seed: u64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(invalid_input("operator dimensions must be positive"));
        }
        if m > n {
            return Err(invalid_input(format!(
                "measurement count {m} exceeds dimension {n}"
            )));
        }
        let entries = if m == n && seed == 0 {
            None
        } else {
            let scale = 1.0 / (m as f64).sqrt();
            let mut g = GaussianStream::new(seed);
            Some((0..m * n).map(|_| g.standard_normal() * scale).collect())
        };
        Ok(Self {
            m,
            n,
            seed,
            entries,
            spectral_norm: OnceLock::new(),
        })
    }

    /// Measurement count for rate `m/n`, rounded to nearest and at least 1.
    pub fn for_rate(rate: f64, n: usize, seed: u64) -> Result<Self> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(invalid_input(format!("measurement rate {rate} not in (0, 1]")));
        }
        let m = ((rate * n as f64).round() as usize).clamp(1, n);
        Self::new(m, n, seed)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn generator(&self) -> &'static str {
        GENERATOR_NAME
    }

    pub fn is_identity(&self) -> bool {
        self.entries.is_none()
    }

    /// Row `i` of `Φ`; `None` in identity mode.
    pub fn row(&self, i: usize) -> Option<&[f64]> {
        self.entries
            .as_ref()
            .map(|e| &e[i * self.n..(i + 1) * self.n])
    }

    /// `Φx`
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(invalid_input(format!(
                "frame of length {} does not match operator dimension {}",
                x.len(),
                self.n
            )));
        }
        Ok(match &self.entries {
            None => x.to_vec(),
            Some(e) => e.chunks_exact(self.n).map(|row| dot(row, x)).collect(),
        })
    }

    /// `Φᵀy`
    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.m {
            return Err(invalid_input(format!(
                "measurement of length {} does not match operator rows {}",
                y.len(),
                self.m
            )));
        }
        Ok(match &self.entries {
            None => y.to_vec(),
            Some(e) => {
                let mut out = vec![0.0; self.n];
                for (row, &yi) in e.chunks_exact(self.n).zip(y) {
                    if yi == 0.0 {
                        continue;
                    }
                    for (o, r) in out.iter_mut().zip(row) {
                        *o += yi * r;
                    }
                }
                out
            }
        })
    }

    /// `y = Φ(x + v)`
    pub fn observe(&self, foreground: &[f64], background: &[f64]) -> Result<Vec<f64>> {
        if foreground.len() != background.len() {
            return Err(invalid_input("foreground and background lengths differ"));
        }
        let sum: Vec<f64> = foreground.iter().zip(background).map(|(a, b)| a + b).collect();
        ensure_finite(&sum, "frame")?;
        self.apply(&sum)
    }

    /// `‖Φ‖₂`, estimated once by power iteration on `ΦᵀΦ` from the all-ones
    /// start vector.
    pub fn spectral_norm(&self) -> f64 {
        *self.spectral_norm.get_or_init(|| match &self.entries {
            None => 1.0,
            Some(_) => self.power_iteration(),
        })
    }

    fn power_iteration(&self) -> f64 {
        let mut x = vec![1.0 / (self.n as f64).sqrt(); self.n];
        let mut estimate = 0.0;
        for _ in 0..1000 {
            let y = self.apply(&x).expect("conformant");
            let z = self.adjoint(&y).expect("conformant");
            let lambda = dot(&x, &z);
            let nz = norm2(&z);
            if nz == 0.0 {
                return 0.0;
            }
            x = z.into_iter().map(|v| v / nz).collect();
            let done = (lambda - estimate).abs() <= 1e-12 * lambda;
            estimate = lambda;
            if done {
                break;
            }
        }
        estimate.sqrt()
    }
}
