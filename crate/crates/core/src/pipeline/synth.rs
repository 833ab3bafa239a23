use std::f64::consts::TAU;

use crate::error::{invalid_config, Result};
use crate::rng::GaussianStream;

/// Synthetic sequence: low-rank drifting background plus a bouncing block.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub height: usize,
    pub width: usize,
    /// Background rank `r`.
    pub rank: usize,
    /// Relative amplitude of the per-frame coefficient drift, in `[0, 0.3]`.
    pub drift: f64,
    /// Block side in pixels; 0 derives it from `sparsity`.
    pub block_size: usize,
    /// Block velocity in px/frame (columns, rows).
    pub velocity_x: f64,
    pub velocity_y: f64,
    /// Additive foreground intensity.
    pub intensity: f64,
    /// Target foreground fraction, in `(0, 0.5)`.
    pub sparsity: f64,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise: f64,
    pub seed: u64,
    /// Evaluation frames, generated after the training frames.
    pub frames: usize,
    /// Leading background-only frames.
    pub train_frames: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            rank: 2,
            drift: 0.1,
            block_size: 0,
            velocity_x: 2.0,
            velocity_y: 1.0,
            intensity: 0.4,
            sparsity: 0.05,
            noise: 0.0,
            seed: 1,
            frames: 50,
            train_frames: 20,
        }
    }
}

impl SyntheticSpec {
    pub fn n(&self) -> usize {
        self.height * self.width
    }

    pub fn total_frames(&self) -> usize {
        self.train_frames + self.frames
    }

    /// Side of the square block.
    pub fn block_side(&self) -> usize {
        if self.block_size > 0 {
            self.block_size
        } else {
            ((self.sparsity * self.n() as f64).sqrt().round() as usize).max(1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(invalid_config("synthetic frame dimensions must be positive"));
        }
        if self.rank == 0 {
            return Err(invalid_config("background rank must be positive"));
        }
        if !(0.0..=0.3).contains(&self.drift) {
            return Err(invalid_config("drift must lie in [0, 0.3]"));
        }
        if !(self.sparsity > 0.0 && self.sparsity < 0.5) {
            return Err(invalid_config("sparsity must lie in (0, 0.5)"));
        }
        let side = self.block_side();
        if side > self.height || side > self.width {
            return Err(invalid_config(format!(
                "{side}px block does not fit a {}x{} frame",
                self.height, self.width
            )));
        }
        if (side * side) as f64 >= 0.5 * self.n() as f64 {
            return Err(invalid_config("block covers half the frame or more"));
        }
        for (name, v) in [
            ("velocity_x", self.velocity_x),
            ("velocity_y", self.velocity_y),
            ("intensity", self.intensity),
        ] {
            if !v.is_finite() {
                return Err(invalid_config(format!("{name} must be finite")));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(invalid_config("noise must be non-negative"));
        }
        if self.frames == 0 {
            return Err(invalid_config("at least one evaluation frame is required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub height: usize,
    pub width: usize,
    /// Observed frames `clamp(bg + fg + noise)`, training frames first.
    pub frames: Vec<Vec<f64>>,
    /// Foreground support per frame.
    pub masks: Vec<Vec<bool>>,
    /// Noise-free background per frame.
    pub background: Vec<Vec<f64>>,
    pub train_frames: usize,
}

impl SyntheticSequence {
    pub fn training(&self) -> &[Vec<f64>] {
        &self.frames[..self.train_frames]
    }

    pub fn evaluation(&self) -> &[Vec<f64>] {
        &self.frames[self.train_frames..]
    }

    pub fn evaluation_masks(&self) -> &[Vec<bool>] {
        &self.masks[self.train_frames..]
    }
}

/// Reflects `p` into `[0, span]`.
fn bounce(p: f64, span: f64) -> f64 {
    if span <= 0.0 {
        return 0.0;
    }
    let period = 2.0 * span;
    let q = p.rem_euclid(period);
    if q <= span {
        q
    } else {
        period - q
    }
}

pub fn generate_synthetic(params: &SyntheticSpec) -> Result<SyntheticSequence> {
    params.validate()?;
    let (h, w, n) = (params.height, params.width, params.n());
    let mut rng = GaussianStream::new(params.seed);

    // Smooth patterns in [0.25, 0.75] and their coefficient schedules.
    let mut patterns = Vec::with_capacity(params.rank);
    let mut schedules = Vec::with_capacity(params.rank);
    for _ in 0..params.rank {
        let fx = 0.5 + 2.5 * rng.uniform();
        let fy = 0.5 + 2.5 * rng.uniform();
        let (px, py) = (TAU * rng.uniform(), TAU * rng.uniform());
        let pattern: Vec<f64> = (0..n)
            .map(|i| {
                let (y, x) = ((i / w) as f64 / h as f64, (i % w) as f64 / w as f64);
                0.5 + 0.25 * (TAU * fx * x + px).sin() * (TAU * fy * y + py).cos()
            })
            .collect();
        patterns.push(pattern);
        schedules.push((0.05 + 0.15 * rng.uniform(), TAU * rng.uniform()));
    }

    let side = params.block_side();
    let (span_x, span_y) = ((w - side) as f64, (h - side) as f64);
    let (x0, y0) = (span_x * rng.uniform(), span_y * rng.uniform());
    let texture: Vec<f64> = (0..side * side).map(|_| 0.8 + 0.4 * rng.uniform()).collect();

    let total = params.total_frames();
    let mut frames = Vec::with_capacity(total);
    let mut masks = Vec::with_capacity(total);
    let mut background = Vec::with_capacity(total);
    for t in 0..total {
        let mut bg = vec![0.0; n];
        for (pattern, &(omega, phase)) in patterns.iter().zip(&schedules) {
            let c = (1.0 + params.drift * (omega * t as f64 + phase).sin()) / params.rank as f64;
            bg.iter_mut().zip(pattern).for_each(|(b, p)| *b += c * p);
        }

        let mut mask = vec![false; n];
        let mut frame = bg.clone();
        if t >= params.train_frames {
            let k = (t - params.train_frames) as f64;
            let bx = bounce(x0 + params.velocity_x * k, span_x).round() as usize;
            let by = bounce(y0 + params.velocity_y * k, span_y).round() as usize;
            for r in 0..side {
                for c in 0..side {
                    let i = (by + r) * w + bx + c;
                    mask[i] = true;
                    frame[i] += params.intensity * texture[r * side + c];
                }
            }
        }
        if params.noise > 0.0 {
            frame.iter_mut().for_each(|v| *v += params.noise * rng.standard_normal());
        }
        frame.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));

        frames.push(frame);
        masks.push(mask);
        background.push(bg);
    }

    Ok(SyntheticSequence {
        height: h,
        width: w,
        frames,
        masks,
        background,
        train_frames: params.train_frames,
    })
}
