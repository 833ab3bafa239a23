//! Coarse-to-fine Horn–Schunck optical flow with warping.
//!
//! The data term is the linearized brightness constancy residual
//! `I_x u + I_y v + I_t`, the regularizer is quadratic smoothness weighted by
//! `α²`. Each pyramid level is solved by a fixed number of Jacobi sweeps per
//! warp, so the result never depends on a data-dependent stopping rule.

use crate::error::{invalid_config, invalid_input, Result};

use super::Frame2D;

/// Intensities are rescaled from `[0, 1]` to this range before estimation so
/// that `alpha` keeps its customary 8-bit meaning.
const INTENSITY_SCALE: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    /// Pyramid levels including the full-resolution one.
    pub levels: usize,
    /// Smoothness weight `α` (on 8-bit intensities).
    pub alpha: f64,
    /// Warps per level.
    pub warps: usize,
    /// Jacobi sweeps per warp.
    pub jacobi_iters: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            alpha: 15.0,
            warps: 5,
            jacobi_iters: 100,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(invalid_config("flow needs at least one pyramid level"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid_config("flow smoothness weight must be positive"));
        }
        if self.warps == 0 {
            return Err(invalid_config("flow needs at least one warp per level"));
        }
        Ok(())
    }
}

/// Per-pixel displacement in pixels: `vx` along columns, `vy` along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub height: usize,
    pub width: usize,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            vx: vec![0.0; height * width],
            vy: vec![0.0; height * width],
        }
    }

    pub fn constant(height: usize, width: usize, vx: f64, vy: f64) -> Self {
        Self {
            height,
            width,
            vx: vec![vx; height * width],
            vy: vec![vy; height * width],
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            vx: self.vx.iter().map(|v| v * s).collect(),
            vy: self.vy.iter().map(|v| v * s).collect(),
        }
    }

    pub fn magnitude(&self, i: usize) -> f64 {
        self.vx[i].hypot(self.vy[i])
    }

    pub fn max_magnitude(&self) -> f64 {
        (0..self.vx.len()).map(|i| self.magnitude(i)).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.vx.iter().chain(&self.vy).all(|v| v.is_finite())
    }
}

/// Flow from `reference` to `target`: `reference(p) ≈ target(p + flow(p))`,
/// defined on the reference grid.
pub fn estimate_flow(reference: &Frame2D, target: &Frame2D, cfg: &FlowConfig) -> Result<FlowField> {
    if !reference.same_shape(target) {
        return Err(invalid_input(format!(
            "flow frames differ in size: {}x{} vs {}x{}",
            reference.height(),
            reference.width(),
            target.height(),
            target.width()
        )));
    }
    cfg.validate()?;
    let min_side = 1usize << cfg.levels;
    if reference.height() < min_side || reference.width() < min_side {
        return Err(invalid_config(format!(
            "{}x{} frame is too small for {} pyramid levels",
            reference.height(),
            reference.width(),
            cfg.levels
        )));
    }

    let first = pyramid(&reference.map(|v| v * INTENSITY_SCALE), cfg.levels);
    let second = pyramid(&target.map(|v| v * INTENSITY_SCALE), cfg.levels);

    let coarsest = &first[cfg.levels - 1];
    let mut flow = FlowField::zeros(coarsest.height(), coarsest.width());
    for level in (0..cfg.levels).rev() {
        let (i1, i2) = (&first[level], &second[level]);
        if flow.height != i1.height() || flow.width != i1.width() {
            flow = upsample_flow(&flow, i1.height(), i1.width());
        }
        for _ in 0..cfg.warps {
            flow = refine(i1, i2, flow, cfg);
        }
    }
    Ok(flow)
}

fn pyramid(frame: &Frame2D, levels: usize) -> Vec<Frame2D> {
    let mut out = vec![frame.clone()];
    for _ in 1..levels {
        let next = downsample(out.last().expect("non-empty"));
        out.push(next);
    }
    out
}

const BLUR: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// 5-tap binomial blur, then keep every other pixel.
fn downsample(frame: &Frame2D) -> Frame2D {
    let (h, w) = (frame.height(), frame.width());
    let mut horiz = Frame2D::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            horiz.data_mut()[r * w + c] = BLUR
                .iter()
                .enumerate()
                .map(|(k, b)| b * frame.get_clamped(r as isize, c as isize + k as isize - 2))
                .sum();
        }
    }
    let (nh, nw) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Frame2D::zeros(nh, nw);
    for r in 0..nh {
        for c in 0..nw {
            out.data_mut()[r * nw + c] = BLUR
                .iter()
                .enumerate()
                .map(|(k, b)| b * horiz.get_clamped(2 * r as isize + k as isize - 2, 2 * c as isize))
                .sum();
        }
    }
    out
}

/// Coarse pixel `i` sits at fine pixel `2i`.
fn upsample_flow(flow: &FlowField, height: usize, width: usize) -> FlowField {
    let vx = Frame2D::from_raw(flow.height, flow.width, flow.vx.clone()).expect("consistent");
    let vy = Frame2D::from_raw(flow.height, flow.width, flow.vy.clone()).expect("consistent");
    let mut out = FlowField::zeros(height, width);
    for r in 0..height {
        for c in 0..width {
            let (y, x) = (r as f64 / 2.0, c as f64 / 2.0);
            out.vx[r * width + c] = 2.0 * vx.sample(y, x);
            out.vy[r * width + c] = 2.0 * vy.sample(y, x);
        }
    }
    out
}

/// One warp: linearize around `flow` and run the Jacobi sweeps.
fn refine(i1: &Frame2D, i2: &Frame2D, flow: FlowField, cfg: &FlowConfig) -> FlowField {
    let (h, w) = (i1.height(), i1.width());
    let n = h * w;
    let mut warped = Frame2D::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            warped.data_mut()[i] = i2.sample(r as f64 + flow.vy[i], c as f64 + flow.vx[i]);
        }
    }

    let mut ix = vec![0.0; n];
    let mut iy = vec![0.0; n];
    let mut it = vec![0.0; n];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let (ri, ci) = (r as isize, c as isize);
            let dx = |f: &Frame2D| (f.get_clamped(ri, ci + 1) - f.get_clamped(ri, ci - 1)) / 2.0;
            let dy = |f: &Frame2D| (f.get_clamped(ri + 1, ci) - f.get_clamped(ri - 1, ci)) / 2.0;
            ix[i] = 0.5 * (dx(i1) + dx(&warped));
            iy[i] = 0.5 * (dy(i1) + dy(&warped));
            it[i] = warped.data()[i] - i1.data()[i];
        }
    }

    let alpha2 = cfg.alpha * cfg.alpha;
    let base = flow;
    let mut cur = base.clone();
    let mut next = base.clone();
    for _ in 0..cfg.jacobi_iters {
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let ubar = neighbour_mean(&cur.vx, h, w, r, c);
                let vbar = neighbour_mean(&cur.vy, h, w, r, c);
                let du = ubar - base.vx[i];
                let dv = vbar - base.vy[i];
                let k = (ix[i] * du + iy[i] * dv + it[i]) / (alpha2 + ix[i] * ix[i] + iy[i] * iy[i]);
                next.vx[i] = ubar - ix[i] * k;
                next.vy[i] = vbar - iy[i] * k;
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Mean of the 4-neighbourhood with replicated borders.
#[inline]
fn neighbour_mean(v: &[f64], h: usize, w: usize, r: usize, c: usize) -> f64 {
    let up = if r > 0 { r - 1 } else { r };
    let down = if r + 1 < h { r + 1 } else { r };
    let left = if c > 0 { c - 1 } else { c };
    let right = if c + 1 < w { c + 1 } else { c };
    0.25 * (v[up * w + c] + v[down * w + c] + v[r * w + left] + v[r * w + right])
}
