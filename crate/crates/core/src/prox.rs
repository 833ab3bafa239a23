//! Proximal operators for the sparse and low-rank blocks, and the adaptive
//! weights of the multi-prior weighted ℓ1 penalty
//! `λ Σ_j β_j ‖W_j (x − z_j)‖₁`.

use crate::error::{ensure_finite, invalid_input, Result};
use crate::linalg::{svd, DenseMatrix, SvdFactors};

/// `sign(u) · max(|u| − tau, 0)`
pub fn soft_threshold(u: f64, tau: f64) -> Result<f64> {
    if tau < 0.0 || tau.is_nan() {
        return Err(invalid_input(format!("threshold {tau} is negative")));
    }
    Ok(shrink(u, tau))
}

#[inline]
pub(crate) fn shrink(u: f64, tau: f64) -> f64 {
    if u > tau {
        u - tau
    } else if u < -tau {
        u + tau
    } else {
        0.0
    }
}

/// Priors `z_0 .. z_J` (with `z_0 = 0`) and their element weights `w_ji` and
/// prior weights `β_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSet {
    priors: Vec<Vec<f64>>,
    element_weights: Vec<Vec<f64>>,
    prior_weights: Vec<f64>,
}

impl PriorSet {
    /// Builds the set from the `J` sparse priors; `z_0 = 0` is prepended.
    /// Element weights start at 1 and prior weights uniform.
    pub fn new(n: usize, sparse_priors: &[Vec<f64>]) -> Result<Self> {
        if n == 0 {
            return Err(invalid_input("prior dimension must be positive"));
        }
        let mut priors = Vec::with_capacity(sparse_priors.len() + 1);
        priors.push(vec![0.0; n]);
        for (j, z) in sparse_priors.iter().enumerate() {
            if z.len() != n {
                return Err(invalid_input(format!(
                    "prior {} has length {}, expected {n}",
                    j + 1,
                    z.len()
                )));
            }
            ensure_finite(z, "prior")?;
            priors.push(z.clone());
        }
        let count = priors.len();
        Ok(Self {
            priors,
            element_weights: vec![vec![1.0; n]; count],
            prior_weights: vec![1.0 / count as f64; count],
        })
    }

    /// Replaces all weights; checks positivity and normalization.
    pub fn with_weights(mut self, element_weights: Vec<Vec<f64>>, prior_weights: Vec<f64>) -> Result<Self> {
        let n = self.dim();
        if element_weights.len() != self.len()
            || prior_weights.len() != self.len()
            || element_weights.iter().any(|w| w.len() != n)
        {
            return Err(invalid_input("weight shapes do not match the priors"));
        }
        if element_weights.iter().flatten().chain(&prior_weights).any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(invalid_input("weights must be positive and finite"));
        }
        self.element_weights = element_weights;
        self.prior_weights = prior_weights;
        Ok(self)
    }

    /// Number of priors including `z_0`.
    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.priors[0].len()
    }

    pub fn priors(&self) -> &[Vec<f64>] {
        &self.priors
    }

    pub fn element_weights(&self) -> &[Vec<f64>] {
        &self.element_weights
    }

    pub fn prior_weights(&self) -> &[f64] {
        &self.prior_weights
    }

    /// `Σ_j β_j ‖W_j (x − z_j)‖₁`
    pub fn penalty(&self, x: &[f64]) -> f64 {
        self.priors
            .iter()
            .zip(&self.element_weights)
            .zip(&self.prior_weights)
            .map(|((z, w), beta)| {
                beta * x
                    .iter()
                    .zip(z)
                    .zip(w)
                    .map(|((xi, zi), wi)| wi * (xi - zi).abs())
                    .sum::<f64>()
            })
            .sum()
    }

    /// Recomputes `w_ji = n (|x_i − z_ji| + ε)⁻¹ / Σ_l (|x_l − z_jl| + ε)⁻¹`.
    pub fn update_element_weights(&mut self, x: &[f64], epsilon: f64) -> Result<()> {
        self.check_update_args(x, epsilon)?;
        let n = self.dim() as f64;
        for (z, w) in self.priors.iter().zip(self.element_weights.iter_mut()) {
            for ((wi, xi), zi) in w.iter_mut().zip(x).zip(z) {
                *wi = 1.0 / ((xi - zi).abs() + epsilon);
            }
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|wi| *wi *= n / total);
        }
        Ok(())
    }

    /// Recomputes `β_j = (‖W_j(x − z_j)‖₁ + ε)⁻¹ / Σ_l (‖W_l(x − z_l)‖₁ + ε)⁻¹`
    /// from the current element weights.
    pub fn update_prior_weights(&mut self, x: &[f64], epsilon: f64) -> Result<()> {
        self.check_update_args(x, epsilon)?;
        for ((z, w), beta) in self
            .priors
            .iter()
            .zip(&self.element_weights)
            .zip(self.prior_weights.iter_mut())
        {
            let residual: f64 = x
                .iter()
                .zip(z)
                .zip(w)
                .map(|((xi, zi), wi)| wi * (xi - zi).abs())
                .sum();
            *beta = 1.0 / (residual + epsilon);
        }
        let total: f64 = self.prior_weights.iter().sum();
        self.prior_weights.iter_mut().for_each(|b| *b /= total);
        Ok(())
    }

    fn check_update_args(&self, x: &[f64], epsilon: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(invalid_input("estimate length does not match the priors"));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid_input(format!("epsilon {epsilon} not in (0, 1)")));
        }
        ensure_finite(x, "estimate")
    }
}

/// Per-coordinate scratch: merged breakpoints and their kink weights.
#[derive(Debug, Default)]
pub struct ProxWorkspace {
    kinks: Vec<(f64, f64)>,
}

impl ProxWorkspace {
    /// Exact minimizer of `(x − u)² + Σ_k c_k |x − b_k|` over the loaded kinks.
    fn minimize(&mut self, u: f64) -> f64 {
        let kinks = &mut self.kinks;
        kinks.sort_by(|a, b| a.0.total_cmp(&b.0));
        // merge duplicate breakpoints
        let mut write = 0;
        for read in 0..kinks.len() {
            if write > 0 && kinks[write - 1].0 == kinks[read].0 {
                kinks[write - 1].1 += kinks[read].1;
            } else {
                kinks[write] = kinks[read];
                write += 1;
            }
        }
        kinks.truncate(write);

        let total: f64 = kinks.iter().map(|k| k.1).sum();
        // slope offset on the interval left of breakpoint `k`:
        // Σ_{l<k} c_l − Σ_{l≥k} c_l
        let mut offset = -total;
        let mut lower = f64::NEG_INFINITY;
        for &(b, c) in kinks.iter() {
            let x = u - offset / 2.0;
            if x > lower && x < b {
                return x;
            }
            // subdifferential at b is [2(b−u) + offset, 2(b−u) + offset + 2c]
            let left = 2.0 * (b - u) + offset;
            let right = left + 2.0 * c;
            if left <= 0.0 && right >= 0.0 {
                return b;
            }
            offset += 2.0 * c;
            lower = b;
        }
        let x = u - offset / 2.0;
        if x > lower {
            return x;
        }
        // Rounding left no interval or breakpoint certified; take the best
        // breakpoint.
        let objective = |x: f64| {
            (x - u).powi(2) + kinks.iter().map(|(b, c)| c * (x - b).abs()).sum::<f64>()
        };
        kinks
            .iter()
            .map(|k| k.0)
            .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
            .unwrap_or(u)
    }
}

/// Coordinate-wise exact minimizer of
/// `(x − u)² + tau · lambda · Σ_j β_j w_ji |x − z_ji|`.
pub fn prox_weighted_multi_l1(u: &[f64], priors: &PriorSet, tau: f64, lambda: f64) -> Result<Vec<f64>> {
    if u.len() != priors.dim() {
        return Err(invalid_input("input length does not match the priors"));
    }
    if !(tau >= 0.0 && lambda >= 0.0 && tau.is_finite() && lambda.is_finite()) {
        return Err(invalid_input("tau and lambda must be finite and nonnegative"));
    }
    ensure_finite(u, "prox input")?;
    let mut ws = ProxWorkspace::default();
    let mut out = vec![0.0; u.len()];
    prox_into(u, priors, tau * lambda, &mut ws, &mut out);
    Ok(out)
}

pub(crate) fn prox_into(u: &[f64], priors: &PriorSet, scale: f64, ws: &mut ProxWorkspace, out: &mut [f64]) {
    if scale == 0.0 {
        out.copy_from_slice(u);
        return;
    }
    for (i, (o, &ui)) in out.iter_mut().zip(u).enumerate() {
        ws.kinks.clear();
        for ((z, w), beta) in priors
            .priors
            .iter()
            .zip(&priors.element_weights)
            .zip(&priors.prior_weights)
        {
            ws.kinks.push((z[i], scale * beta * w[i]));
        }
        *o = ws.minimize(ui);
    }
}

/// Singular value thresholding `U Γ_τ(Σ) Vᵀ`; also returns the thresholded
/// factors.
pub fn svt(x: &DenseMatrix, tau: f64) -> Result<(DenseMatrix, SvdFactors)> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(invalid_input("threshold must be finite and nonnegative"));
    }
    let mut f = svd(x)?;
    f.s.iter_mut().for_each(|s| *s = (*s - tau).max(0.0));
    Ok((f.reconstruct(), f))
}
