//! Per-frame compressive separation of `y_t = Φ(x_t + v_t)` into a sparse
//! foreground `x_t` and a low-rank background `v_t`.
//!
//! Each instance minimizes
//!
//! ```text
//! ½‖Φ(x + v) − y‖² + λμ Σ_j β_j ‖W_j (x − z_j)‖₁ + μ ‖[B v]‖_*
//! ```
//!
//! by accelerated proximal gradient with a fixed ½ step, continuation on `μ`
//! (the stopping test only applies once `μ` sits at its floor `μ̄`),
//! and adaptive weights recomputed after every sparse update. The background
//! block appends the gradient-stepped `v` to the prior `B` with an
//! incremental SVD, soft-thresholds the singular values by `μ/2` and keeps the
//! last column. After convergence the sparse priors shift in the new
//! foreground and `B` is replaced by the leading `d` thresholded triplets.

use std::fmt;
use std::str::FromStr;

use crate::error::{ensure_finite, invalid_config, invalid_input, Error, Result};
use crate::linalg::{inc_svd, norm2, svd, truncate_factors, AppendedSvd, DenseMatrix, SvdFactors};
use crate::measurement::MeasurementOperator;
use crate::motion::{generate_priors, FlowConfig};
use crate::prox::{prox_into, PriorSet, ProxWorkspace};

/// Objective growth over its running minimum that counts as divergence.
const DIVERGENCE_FACTOR: f64 = 1e6;

/// Safety margin on the power-iteration estimate of `‖Φ‖₂`.
const NORM_MARGIN: f64 = 1.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SeparatorConfig {
    pub height: usize,
    pub width: usize,
    /// ℓ1 weight; `None` means `1/√n`.
    pub lambda: Option<f64>,
    /// Continuation floor `μ̄`.
    pub mu_bar: f64,
    /// Initial continuation value; `None` means `0.99 ‖Φᵀy‖_∞`.
    pub mu0: Option<f64>,
    /// Weight smoothing `ε` in the `w_ji` and `β_j` updates.
    pub epsilon: f64,
    /// Continuation decay, `μ_{k+1} = max(decay · μ_k, μ̄)`.
    pub mu_decay: f64,
    /// Number of sparse priors `J`.
    pub prior_count: usize,
    /// Width `d` of the low-rank prior.
    pub train_width: usize,
    pub max_iters: usize,
    /// Convergence constant in `‖∂H‖² < tol_scale ‖(x, v)‖²`.
    pub tol_scale: f64,
    /// Recompute `w_ji` and `β_j` every iteration.
    pub reweight: bool,
    pub flow: FlowConfig,
}

impl SeparatorConfig {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            lambda: None,
            mu_bar: 1e-3,
            mu0: None,
            epsilon: 0.8,
            mu_decay: 0.98,
            prior_count: 3,
            train_width: 100,
            max_iters: 2000,
            tol_scale: 2e-7,
            reweight: true,
            flow: FlowConfig::default(),
        }
    }

    pub fn n(&self) -> usize {
        self.height * self.width
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or_else(|| 1.0 / (self.n() as f64).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.height == 0 || self.width == 0 {
            return Err(invalid_config("frame dimensions must be positive"));
        }
        if self.lambda.is_some_and(|l| !positive(l)) {
            return Err(invalid_config("lambda must be positive"));
        }
        if !positive(self.mu_bar) {
            return Err(invalid_config("mu_bar must be positive"));
        }
        if self.mu0.is_some_and(|m| !positive(m)) {
            return Err(invalid_config("mu0 must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid_config("epsilon must lie in (0, 1)"));
        }
        if !(self.mu_decay > 0.0 && self.mu_decay < 1.0) {
            return Err(invalid_config("mu_decay must lie in (0, 1)"));
        }
        if self.prior_count == 0 {
            return Err(invalid_config("at least one sparse prior is required"));
        }
        if self.train_width == 0 || self.train_width >= self.n() {
            return Err(invalid_config("train_width must be in [1, n)"));
        }
        if self.max_iters == 0 {
            return Err(invalid_config("max_iters must be positive"));
        }
        if !positive(self.tol_scale) {
            return Err(invalid_config("tol_scale must be positive"));
        }
        self.flow.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeparationMode {
    /// Raw previous foregrounds as priors.
    Corpca,
    /// Motion-compensated previous foregrounds as priors.
    CorpcaOf,
}

impl FromStr for SeparationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corpca" => Ok(Self::Corpca),
            "corpca-of" => Ok(Self::CorpcaOf),
            other => Err(invalid_input(format!("unknown mode {other:?}"))),
        }
    }
}

impl fmt::Display for SeparationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Corpca => "corpca",
            Self::CorpcaOf => "corpca-of",
        })
    }
}

/// Prior information carried between frames.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    /// Thin factors of `B_t` (`n x d`).
    pub background: SvdFactors,
    /// The `J` latest recovered foregrounds, oldest first (`z_1 .. z_J`).
    pub sparse_priors: Vec<Vec<f64>>,
    /// Frames separated so far.
    pub t: usize,
}

impl EngineState {
    pub fn n(&self) -> usize {
        self.background.u.rows()
    }

    pub fn width(&self) -> usize {
        self.background.s.len()
    }
}

/// `B_0` from the thin SVD of the `n x d` training matrix; zero sparse priors.
pub fn init_from_training(frames: &[Vec<f64>], cfg: &SeparatorConfig) -> Result<EngineState> {
    cfg.validate()?;
    let n = cfg.n();
    if frames.len() != cfg.train_width {
        return Err(invalid_input(format!(
            "expected {} training frames, got {}",
            cfg.train_width,
            frames.len()
        )));
    }
    if let Some(bad) = frames.iter().position(|f| f.len() != n) {
        return Err(invalid_input(format!(
            "training frame {bad} has length {}, expected {n}",
            frames[bad].len()
        )));
    }
    let training = DenseMatrix::from_columns(frames)?;
    Ok(EngineState {
        background: svd(&training)?,
        sparse_priors: vec![vec![0.0; n]; cfg.prior_count],
        t: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub residual_norm: f64,
    pub mu: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

/// Snapshot handed to observers after every iteration.
#[derive(Debug)]
pub struct IterateView<'a> {
    pub iteration: usize,
    pub foreground: &'a [f64],
    pub background: &'a [f64],
    pub mu: f64,
    pub xi: f64,
    pub objective: f64,
    pub priors: &'a PriorSet,
}

/// How the low-rank block is updated.
#[derive(Debug, Clone, Copy)]
pub enum BackgroundBlock<'a> {
    /// Incremental-SVD thresholding against the prior `B`.
    Tracked(&'a SvdFactors),
    /// Background held at a known value; only the sparse block moves.
    Fixed(&'a [f64]),
}

#[derive(Debug, Clone)]
pub struct InstanceSolution {
    pub foreground: Vec<f64>,
    pub background: Vec<f64>,
    pub trace: IterationTrace,
    /// `B_t` for the next instance (tracked block only).
    pub next_background: Option<SvdFactors>,
}

#[derive(Debug, Clone)]
pub struct Separation {
    pub foreground: Vec<f64>,
    pub background: Vec<f64>,
    pub trace: IterationTrace,
}

/// One proximal step `(x̃, ṽ) → (x⁺, v⁺)` with the data-term gradients at
/// both points (the gradient is shared by the two blocks).
#[derive(Debug, Clone, Copy)]
pub struct ProximalStep<'a> {
    pub x_ext: &'a [f64],
    pub v_ext: &'a [f64],
    pub x_new: &'a [f64],
    pub v_new: &'a [f64],
    pub grad_ext: &'a [f64],
    pub grad_new: &'a [f64],
}

impl ProximalStep<'_> {
    /// `‖r‖²` for `r = 2((x̃, ṽ) − (x⁺, v⁺)) + ∇f(x⁺, v⁺) − ∇f(x̃, ṽ)`, an
    /// element of `∂H` at the new point.
    pub fn residual_sq(&self) -> f64 {
        let block = |ext: &[f64], new: &[f64]| -> f64 {
            ext.iter()
                .zip(new)
                .zip(self.grad_new.iter().zip(self.grad_ext))
                .map(|((e, n), (gn, ge))| {
                    let r = 2.0 * (e - n) + (gn - ge);
                    r * r
                })
                .sum()
        };
        block(self.x_ext, self.x_new) + block(self.v_ext, self.v_new)
    }

    pub fn iterate_norm_sq(&self) -> f64 {
        self.x_new.iter().chain(self.v_new).map(|v| v * v).sum()
    }
}

/// `‖∂H‖² < tol_scale ‖(x⁺, v⁺)‖²`; an exact fixed point (zero residual)
/// also counts as converged.
pub fn check_convergence(step: &ProximalStep<'_>, tol_scale: f64) -> bool {
    let r = step.residual_sq();
    r == 0.0 || r < tol_scale * step.iterate_norm_sq()
}

/// `Φ` scaled so that the ½ step is within `1/L` for the joint gradient.
struct ScaledProblem<'a> {
    op: &'a MeasurementOperator,
    y: &'a [f64],
    /// `c²` where `cΦ` is the effective operator.
    scale_sq: f64,
}

impl<'a> ScaledProblem<'a> {
    fn new(op: &'a MeasurementOperator, y: &'a [f64]) -> Self {
        let norm = op.spectral_norm();
        let scale_sq = if norm > 1.0 {
            1.0 / (NORM_MARGIN * norm).powi(2)
        } else {
            1.0
        };
        Self { op, y, scale_sq }
    }

    /// Residual `Φz − y` (unscaled).
    fn residual(&self, z: &[f64]) -> Vec<f64> {
        let mut r = self.op.apply(z).expect("dimensions checked");
        r.iter_mut().zip(self.y).for_each(|(ri, yi)| *ri -= yi);
        r
    }

    /// `c² Φᵀ r`
    fn gradient(&self, residual: &[f64]) -> Vec<f64> {
        let mut g = self.op.adjoint(residual).expect("dimensions checked");
        g.iter_mut().for_each(|v| *v *= self.scale_sq);
        g
    }

    fn data_term(&self, residual: &[f64]) -> f64 {
        0.5 * self.scale_sq * residual.iter().map(|r| r * r).sum::<f64>()
    }
}

fn sum_of(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn nuclear_with(block: BackgroundBlock<'_>, v: &[f64]) -> Result<f64> {
    match block {
        BackgroundBlock::Tracked(b) => Ok(AppendedSvd::reduced(b, v)?.singular_values().iter().sum()),
        BackgroundBlock::Fixed(_) => Ok(0.0),
    }
}

/// Objective value at `(x, v)` for the given weights and `μ`, using the same
/// operator scaling as the solver.
#[allow(clippy::too_many_arguments)]
pub fn objective(
    y: &[f64],
    op: &MeasurementOperator,
    priors: &PriorSet,
    block: BackgroundBlock<'_>,
    lambda: f64,
    mu: f64,
    x: &[f64],
    v: &[f64],
) -> Result<f64> {
    let problem = ScaledProblem::new(op, y);
    let sum: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + b).collect();
    let residual = problem.residual(&sum);
    Ok(problem.data_term(&residual) + lambda * mu * priors.penalty(x) + mu * nuclear_with(block, v)?)
}

/// Runs the iteration for one instance without touching any state.
pub fn solve_instance(
    y: &[f64],
    op: &MeasurementOperator,
    sparse_priors: &[Vec<f64>],
    block: BackgroundBlock<'_>,
    cfg: &SeparatorConfig,
    mut observer: Option<&mut dyn FnMut(&IterateView<'_>)>,
) -> Result<InstanceSolution> {
    cfg.validate()?;
    let n = op.n();
    if n != cfg.n() {
        return Err(invalid_input(format!(
            "operator dimension {n} does not match {}x{} frames",
            cfg.height, cfg.width
        )));
    }
    if y.len() != op.m() {
        return Err(invalid_input(format!(
            "measurement has length {}, operator has {} rows",
            y.len(),
            op.m()
        )));
    }
    ensure_finite(y, "measurement")?;
    match block {
        BackgroundBlock::Tracked(b) if b.u.rows() != n => {
            return Err(invalid_input("background prior dimension mismatch"))
        }
        BackgroundBlock::Fixed(v) if v.len() != n => {
            return Err(invalid_input("fixed background dimension mismatch"))
        }
        _ => {}
    }

    let problem = ScaledProblem::new(op, y);
    let lambda = cfg.lambda();
    let mut priors = PriorSet::new(n, sparse_priors)?;
    let zeros = vec![0.0; n];
    priors.update_prior_weights(&zeros, cfg.epsilon)?;

    let mut mu = match cfg.mu0 {
        Some(m) => m,
        None => {
            let g0 = problem.gradient(y);
            0.99 * g0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        }
    }
    .max(cfg.mu_bar);

    let (mut x, mut x_prev) = (zeros.clone(), zeros.clone());
    let (mut v, mut v_prev) = match block {
        BackgroundBlock::Fixed(fixed) => (fixed.to_vec(), fixed.to_vec()),
        BackgroundBlock::Tracked(_) => (zeros.clone(), zeros.clone()),
    };
    let (mut xi_prev, mut xi) = (1.0f64, 1.0f64);
    let mut trace = IterationTrace::default();
    let mut last_stepped: Option<Vec<f64>> = None;
    let mut last_mu = mu;
    let mut min_objective = f64::INFINITY;
    let mut ws = ProxWorkspace::default();
    let mut x_ext = vec![0.0; n];
    let mut v_ext = vec![0.0; n];
    let mut sum = vec![0.0; n];
    let mut x_new = vec![0.0; n];

    // The gradient is affine in the iterate, so its value at the extrapolated
    // point is the same combination of the last two gradients.
    let mut grad = problem.gradient(&problem.residual(&sum_of(&x, &v)));
    let mut grad_prev = grad.clone();
    let mut grad_ext = vec![0.0; n];

    for k in 0..cfg.max_iters {
        let momentum = (xi_prev - 1.0) / xi;
        for i in 0..n {
            x_ext[i] = x[i] + momentum * (x[i] - x_prev[i]);
            v_ext[i] = v[i] + momentum * (v[i] - v_prev[i]);
            grad_ext[i] = grad[i] + momentum * (grad[i] - grad_prev[i]);
        }

        let v_new = match block {
            BackgroundBlock::Tracked(b) => {
                let stepped: Vec<f64> = v_ext.iter().zip(&grad_ext).map(|(a, g)| a - 0.5 * g).collect();
                let app = AppendedSvd::reduced(b, &stepped).map_err(|_| Error::DivergenceDetected { iteration: k })?;
                let col = app.shrunk_last_column(mu / 2.0);
                last_stepped = Some(stepped);
                col
            }
            BackgroundBlock::Fixed(fixed) => fixed.to_vec(),
        };

        let stepped: Vec<f64> = x_ext.iter().zip(&grad_ext).map(|(a, g)| a - 0.5 * g).collect();
        if stepped.iter().any(|s| !s.is_finite()) {
            return Err(Error::DivergenceDetected { iteration: k });
        }
        prox_into(&stepped, &priors, mu * lambda, &mut ws, &mut x_new);

        if cfg.reweight {
            priors.update_element_weights(&x_new, cfg.epsilon)?;
            priors.update_prior_weights(&x_new, cfg.epsilon)?;
        }

        let xi_next = (1.0 + (1.0 + 4.0 * xi * xi).sqrt()) / 2.0;
        let mu_next = (cfg.mu_decay * mu).max(cfg.mu_bar);

        for i in 0..n {
            sum[i] = x_new[i] + v_new[i];
        }
        let residual_new = problem.residual(&sum);
        let grad_new = problem.gradient(&residual_new);
        let step = ProximalStep {
            x_ext: &x_ext,
            v_ext: &v_ext,
            x_new: &x_new,
            v_new: &v_new,
            grad_ext: &grad_ext,
            grad_new: &grad_new,
        };
        let residual_sq = step.residual_sq();
        // Continuation is a homotopy toward the μ̄ problem; stopping above the
        // floor would return the solution of a more heavily shrunk instance.
        let converged = mu <= cfg.mu_bar && check_convergence(&step, cfg.tol_scale);

        let h = problem.data_term(&residual_new)
            + lambda * mu * priors.penalty(&x_new)
            + mu * nuclear_with(block, &v_new).map_err(|_| Error::DivergenceDetected { iteration: k })?;
        if !h.is_finite() || (min_objective > 0.0 && min_objective.is_finite() && h > DIVERGENCE_FACTOR * min_objective) {
            return Err(Error::DivergenceDetected { iteration: k });
        }
        min_objective = min_objective.min(h);

        trace.records.push(IterationRecord {
            iteration: k,
            objective: h,
            residual_norm: residual_sq.sqrt(),
            mu,
            xi,
        });
        if let Some(obs) = observer.as_deref_mut() {
            obs(&IterateView {
                iteration: k,
                foreground: &x_new,
                background: &v_new,
                mu,
                xi,
                objective: h,
                priors: &priors,
            });
        }

        std::mem::swap(&mut x_prev, &mut x);
        std::mem::swap(&mut x, &mut x_new);
        grad_prev = std::mem::replace(&mut grad, grad_new);
        v_prev = std::mem::replace(&mut v, v_new);
        xi_prev = xi;
        xi = xi_next;
        last_mu = mu;
        mu = mu_next;

        if converged {
            trace.converged = true;
            break;
        }
    }

    let next_background = match (block, last_stepped) {
        (BackgroundBlock::Tracked(b), Some(stepped)) => {
            let d = b.rank();
            let full = inc_svd(b, &stepped)?;
            let (_, kept) = truncate_factors(&full, d, last_mu / 2.0)?;
            Some(SvdFactors {
                u: kept.u,
                s: kept.s,
                v: DenseMatrix::identity(d),
            })
        }
        _ => None,
    };

    Ok(InstanceSolution {
        foreground: x,
        background: v,
        trace,
        next_background,
    })
}

fn check_state(state: &EngineState, cfg: &SeparatorConfig) -> Result<()> {
    if state.n() != cfg.n() {
        return Err(invalid_input("state dimension does not match the configuration"));
    }
    if state.sparse_priors.len() != cfg.prior_count {
        return Err(invalid_input(format!(
            "state holds {} sparse priors, configuration expects {}",
            state.sparse_priors.len(),
            cfg.prior_count
        )));
    }
    Ok(())
}

fn separate_with_priors(
    state: &mut EngineState,
    y: &[f64],
    op: &MeasurementOperator,
    cfg: &SeparatorConfig,
    priors: &[Vec<f64>],
    observer: Option<&mut dyn FnMut(&IterateView<'_>)>,
) -> Result<Separation> {
    let sol = solve_instance(y, op, priors, BackgroundBlock::Tracked(&state.background), cfg, observer)?;
    state.sparse_priors.remove(0);
    state.sparse_priors.push(sol.foreground.clone());
    if let Some(b) = sol.next_background {
        state.background = b;
    }
    state.t += 1;
    Ok(Separation {
        foreground: sol.foreground,
        background: sol.background,
        trace: sol.trace,
    })
}

/// Separates one frame with the raw previous foregrounds as priors and
/// updates `state`. On error `state` is left untouched.
pub fn separate(
    state: &mut EngineState,
    y: &[f64],
    op: &MeasurementOperator,
    cfg: &SeparatorConfig,
) -> Result<Separation> {
    separate_observed(state, y, op, cfg, SeparationMode::Corpca, None)
}

/// Separates one frame with motion-compensated priors once three
/// foregrounds have been recovered; before that it behaves as [`separate`].
pub fn separate_with_flow_priors(
    state: &mut EngineState,
    y: &[f64],
    op: &MeasurementOperator,
    cfg: &SeparatorConfig,
) -> Result<Separation> {
    separate_observed(state, y, op, cfg, SeparationMode::CorpcaOf, None)
}

/// [`separate`] or [`separate_with_flow_priors`] with an optional per-iteration
/// observer.
pub fn separate_observed(
    state: &mut EngineState,
    y: &[f64],
    op: &MeasurementOperator,
    cfg: &SeparatorConfig,
    mode: SeparationMode,
    observer: Option<&mut dyn FnMut(&IterateView<'_>)>,
) -> Result<Separation> {
    check_state(state, cfg)?;
    let priors = match mode {
        SeparationMode::CorpcaOf if state.t >= 3 => flow_priors(state, cfg)?,
        _ => state.sparse_priors.clone(),
    };
    separate_with_priors(state, y, op, cfg, &priors, observer)
}

/// Replaces `z_J, z_{J-1}, z_{J-2}` by the motion-compensated priors.
pub fn flow_priors(state: &EngineState, cfg: &SeparatorConfig) -> Result<Vec<Vec<f64>>> {
    let j = state.sparse_priors.len();
    if j < 3 {
        return Err(invalid_config(format!(
            "flow priors need at least 3 sparse priors, have {j}"
        )));
    }
    let mut priors = state.sparse_priors.clone();
    let [p1, p2, p3] = generate_priors(
        &priors[j - 1],
        &priors[j - 2],
        &priors[j - 3],
        cfg.height,
        cfg.width,
        &cfg.flow,
    )?;
    priors[j - 1] = p1;
    priors[j - 2] = p2;
    priors[j - 3] = p3;
    Ok(priors)
}

/// Relative Frobenius error helper used by tests and reports.
pub fn relative_error(estimate: &[f64], truth: &[f64]) -> f64 {
    let diff: Vec<f64> = estimate.iter().zip(truth).map(|(a, b)| a - b).collect();
    let t = norm2(truth);
    if t == 0.0 {
        norm2(&diff)
    } else {
        norm2(&diff) / t
    }
}
