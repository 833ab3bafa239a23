//! Browser bindings for the separation engine: optical flow on a shifted
//! texture, frame-by-frame separation of a synthetic sequence, and the 1-D
//! multi-prior proximal map.

use wasm_bindgen::prelude::*;

use corpca::engine::{init_from_training, separate_observed, EngineState, SeparationMode, SeparatorConfig};
use corpca::motion::{estimate_flow, flow_to_color, FlowConfig, Frame2D};
use corpca::pipeline::roc::support_f1;
use corpca::pipeline::config::DEFAULT_SUPPORT_THRESHOLD;
use corpca::pipeline::{generate_synthetic, SyntheticSequence, SyntheticSpec};
use corpca::prox::{prox_weighted_multi_l1, PriorSet};
use corpca::MeasurementOperator;

fn js_err(e: corpca::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Gray RGBA bytes with `lo..hi` mapped to black..white.
fn gray_rgba(values: &[f64], lo: f64, hi: f64) -> Vec<u8> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    values
        .iter()
        .flat_map(|&v| {
            let g = (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8;
            [g, g, g, 255]
        })
        .collect()
}

fn texture(h: usize, w: usize, dx: f64, dy: f64) -> Vec<f64> {
    (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64 - dy, (i % w) as f64 - dx);
            0.5 + 0.18 * (x * 0.31).sin() * (y * 0.27).cos() + 0.12 * ((x + 0.6 * y) * 0.19).sin()
        })
        .collect()
}

/// Flow between a texture and a copy translated by `(dx, dy)` pixels.
#[wasm_bindgen]
pub struct FlowDemo {
    width: usize,
    height: usize,
    rgba: Vec<u8>,
    mean_vx: f64,
    mean_vy: f64,
    endpoint_error: f64,
}

#[wasm_bindgen]
impl FlowDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(dx: f64, dy: f64, alpha: f64, levels: usize) -> Result<FlowDemo, JsError> {
        let (h, w) = (64, 80);
        let a = Frame2D::from_intensities(h, w, &texture(h, w, 0.0, 0.0)).map_err(js_err)?;
        let b = Frame2D::from_intensities(h, w, &texture(h, w, dx, dy)).map_err(js_err)?;
        let cfg = FlowConfig {
            alpha,
            levels,
            ..FlowConfig::default()
        };
        let flow = estimate_flow(&a, &b, &cfg).map_err(js_err)?;

        // Statistics away from the border, where the shifted copy is defined.
        let margin = 6;
        let (mut sx, mut sy, mut se, mut count) = (0.0, 0.0, 0.0, 0usize);
        for r in margin..h - margin {
            for c in margin..w - margin {
                let i = r * w + c;
                sx += flow.vx[i];
                sy += flow.vy[i];
                se += (flow.vx[i] - dx).hypot(flow.vy[i] - dy);
                count += 1;
            }
        }
        let count = count as f64;
        Ok(FlowDemo {
            width: w,
            height: h,
            rgba: flow_to_color(&flow).to_rgba(),
            mean_vx: sx / count,
            mean_vy: sy / count,
            endpoint_error: se / count,
        })
    }

    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter, js_name = meanVx)]
    pub fn mean_vx(&self) -> f64 {
        self.mean_vx
    }

    #[wasm_bindgen(getter, js_name = meanVy)]
    pub fn mean_vy(&self) -> f64 {
        self.mean_vy
    }

    #[wasm_bindgen(getter, js_name = endpointError)]
    pub fn endpoint_error(&self) -> f64 {
        self.endpoint_error
    }
}

/// Online separation of the default synthetic sequence, one frame per `step`.
#[wasm_bindgen]
pub struct SeparationDemo {
    seq: SyntheticSequence,
    cfg: SeparatorConfig,
    op: MeasurementOperator,
    mode: SeparationMode,
    state: EngineState,
    next: usize,
    foreground: Vec<f64>,
    background: Vec<f64>,
    f1: f64,
    iterations: usize,
}

#[wasm_bindgen]
impl SeparationDemo {
    /// `mode` is `corpca` or `corpca-of`.
    #[wasm_bindgen(constructor)]
    pub fn new(rate: f64, mode: &str, seed: u64, velocity_x: f64, velocity_y: f64) -> Result<SeparationDemo, JsError> {
        let mode: SeparationMode = mode.parse().map_err(js_err)?;
        let params = SyntheticSpec {
            seed,
            velocity_x,
            velocity_y,
            ..SyntheticSpec::default()
        };
        let seq = generate_synthetic(&params).map_err(js_err)?;
        let mut cfg = SeparatorConfig::new(params.height, params.width);
        cfg.train_width = params.train_frames;
        let op = MeasurementOperator::for_rate(rate, params.n(), seed).map_err(js_err)?;
        let state = init_from_training(seq.training(), &cfg).map_err(js_err)?;
        let n = params.n();
        Ok(SeparationDemo {
            seq,
            cfg,
            op,
            mode,
            state,
            next: 0,
            foreground: vec![0.0; n],
            background: vec![0.0; n],
            f1: 0.0,
            iterations: 0,
        })
    }

    /// Separates the next frame; returns `false` once the sequence is done.
    pub fn step(&mut self) -> Result<bool, JsError> {
        let Some(frame) = self.seq.evaluation().get(self.next) else {
            return Ok(false);
        };
        let y = self.op.apply(frame).map_err(js_err)?;
        let sep = separate_observed(&mut self.state, &y, &self.op, &self.cfg, self.mode, None).map_err(js_err)?;
        self.f1 = support_f1(&sep.foreground, &self.seq.evaluation_masks()[self.next], DEFAULT_SUPPORT_THRESHOLD);
        self.iterations = sep.trace.iterations();
        self.foreground = sep.foreground;
        self.background = sep.background;
        self.next += 1;
        Ok(true)
    }

    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.seq.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.seq.height
    }

    /// Frames separated so far.
    #[wasm_bindgen(getter)]
    pub fn processed(&self) -> usize {
        self.next
    }

    #[wasm_bindgen(getter)]
    pub fn total(&self) -> usize {
        self.seq.evaluation().len()
    }

    /// Support F1 of the latest foreground.
    #[wasm_bindgen(getter)]
    pub fn f1(&self) -> f64 {
        self.f1
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// The latest input frame.
    #[wasm_bindgen(js_name = frameRgba)]
    pub fn frame_rgba(&self) -> Vec<u8> {
        let t = self.next.saturating_sub(1);
        gray_rgba(&self.seq.evaluation()[t], 0.0, 1.0)
    }

    /// `|x̂|` of the latest frame, scaled to its maximum.
    #[wasm_bindgen(js_name = foregroundRgba)]
    pub fn foreground_rgba(&self) -> Vec<u8> {
        let mag: Vec<f64> = self.foreground.iter().map(|v| v.abs()).collect();
        let top = mag.iter().copied().fold(0.0, f64::max);
        gray_rgba(&mag, 0.0, top)
    }

    #[wasm_bindgen(js_name = backgroundRgba)]
    pub fn background_rgba(&self) -> Vec<u8> {
        gray_rgba(&self.background, 0.0, 1.0)
    }
}

/// The scalar prox `argmin_x (x − u)² + τλ Σ_j β_j |x − z_j|` with `z_0 = 0`,
/// the given `priors` as `z_1..`, unit element weights and uniform `β`,
/// sampled at `samples` points `u` evenly spread over `[u_min, u_max]`.
#[wasm_bindgen(js_name = proxCurve)]
pub fn prox_curve(u_min: f64, u_max: f64, samples: usize, priors: Vec<f64>, tau: f64, lambda: f64) -> Result<Vec<f64>, JsError> {
    if samples < 2 || u_max.partial_cmp(&u_min) != Some(std::cmp::Ordering::Greater) {
        return Err(JsError::new("need at least two samples over a nonempty range"));
    }
    let sparse: Vec<Vec<f64>> = priors.iter().map(|&z| vec![z]).collect();
    let set = PriorSet::new(1, &sparse).map_err(js_err)?;
    let h = (u_max - u_min) / (samples - 1) as f64;
    (0..samples)
        .map(|i| {
            let u = u_min + h * i as f64;
            prox_weighted_multi_l1(&[u], &set, tau, lambda).map(|x| x[0]).map_err(js_err)
        })
        .collect()
}
