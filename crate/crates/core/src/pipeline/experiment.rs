//! Rate sweeps: one online run per measurement rate, each with its own
//! operator and engine state, written to its own directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::engine::{init_from_training, separate_observed, Separation, SeparationMode, SeparatorConfig};
use crate::error::{invalid_config, Result};
use crate::measurement::MeasurementOperator;

use super::checkpoint::OperatorMeta;
use super::config::ExperimentConfig;
use super::io::{load_sequence, write_frame_f32, LoadedSequence, SequenceManifest};
use super::roc::{default_thresholds, evaluate_roc, support_f1};
use super::synth::generate_synthetic;

/// Environment variable capping the number of worker threads (0 = auto).
pub const THREADS_ENV: &str = "CORPCA_THREADS";

#[derive(Debug, Clone)]
pub enum Source {
    /// The synthetic sequence described by the experiment configuration.
    Synthetic,
    Manifest(SequenceManifest),
}

/// Frames to separate, from either source.
pub fn build_sequence(source: &Source, cfg: &ExperimentConfig) -> Result<LoadedSequence> {
    match source {
        Source::Manifest(m) => load_sequence(m),
        Source::Synthetic => {
            let seq = generate_synthetic(&cfg.synthetic)?;
            Ok(LoadedSequence {
                height: seq.height,
                width: seq.width,
                training: seq.training().to_vec(),
                evaluation: seq.evaluation().to_vec(),
                masks: Some(seq.evaluation_masks().to_vec()),
            })
        }
    }
}

/// Separates `frames` in order after initializing from `training`. `sink`
/// sees every separated frame as soon as it is available.
pub fn separate_sequence(
    training: &[Vec<f64>],
    frames: &[Vec<f64>],
    cfg: &SeparatorConfig,
    op: &MeasurementOperator,
    mode: SeparationMode,
    mut sink: impl FnMut(usize, &Separation) -> Result<()>,
) -> Result<Vec<Separation>> {
    let mut state = init_from_training(training, cfg)?;
    let mut out = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let y = op.apply(frame)?;
        let sep = separate_observed(&mut state, &y, op, cfg, mode, None)?;
        sink(t, &sep)?;
        out.push(sep);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub rate: f64,
    pub mode: SeparationMode,
    pub dir: PathBuf,
    pub operator: OperatorMeta,
    pub frames: usize,
    pub iterations: usize,
    pub converged_frames: usize,
    pub roc_area: Option<f64>,
    pub mean_f1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub runs: Vec<RateReport>,
}

impl ExperimentReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("mode,rate,frames,iterations,converged,roc_area,mean_f1\n");
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
        for r in &self.runs {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.mode,
                r.rate,
                r.frames,
                r.iterations,
                r.converged_frames,
                opt(r.roc_area),
                opt(r.mean_f1)
            )
            .expect("string write");
        }
        out
    }
}

/// Separator settings with the frame geometry taken from the sequence.
pub fn effective_separator(cfg: &ExperimentConfig, seq: &LoadedSequence) -> SeparatorConfig {
    let mut sep = cfg.separator.clone();
    sep.height = seq.height;
    sep.width = seq.width;
    sep.train_width = seq.training.len();
    sep
}

fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| invalid_config(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}"))),
    }
}

#[cfg(feature = "parallel")]
fn map_runs<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| invalid_config(format!("cannot start worker threads: {e}")))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(f).collect()))
}

#[cfg(not(feature = "parallel"))]
fn map_runs<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    thread_count()?;
    Ok((0..count).map(f).collect())
}

/// Directory of one run inside the output directory.
pub fn run_dir(out_dir: &Path, mode: SeparationMode, rate: f64) -> PathBuf {
    out_dir.join(format!("{mode}_rate{rate:.2}"))
}

/// For every rate: draws an operator, measures every frame, separates the
/// sequence and writes `fg_TTTT.f32`, `bg_TTTT.f32`, `roc.csv` (when masks are
/// known) and `manifest.txt`. A run that fails leaves its partial frames and a
/// `FAILED` manifest behind.
pub fn run_experiment(source: &Source, cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    let seq = build_sequence(source, cfg)?;
    let sep = effective_separator(cfg, &seq);
    sep.validate()?;
    fs::create_dir_all(out_dir)?;

    let results = map_runs(cfg.rates.len(), |i| {
        run_rate(&seq, cfg, &sep, cfg.rates[i], cfg.operator_seed.wrapping_add(i as u64), out_dir)
    })?;
    let mut report = ExperimentReport::default();
    for r in results {
        report.runs.push(r?);
    }
    Ok(report)
}

fn run_rate(
    seq: &LoadedSequence,
    cfg: &ExperimentConfig,
    sep: &SeparatorConfig,
    rate: f64,
    seed: u64,
    out_dir: &Path,
) -> Result<RateReport> {
    let dir = run_dir(out_dir, cfg.mode, rate);
    fs::create_dir_all(&dir)?;
    let n = seq.height * seq.width;
    let op = MeasurementOperator::for_rate(rate, n, seed)?;
    let meta = OperatorMeta::of(&op);
    let mut config = cfg.clone();
    config.separator = sep.clone();
    config.rates = vec![rate];

    let header = |status: &str| {
        format!(
            "status = {status}\nmode = {}\nrate = {rate}\noperator_m = {}\noperator_n = {}\noperator_seed = {}\ngenerator = {}\n",
            cfg.mode, meta.m, meta.n, meta.seed, meta.generator
        )
    };
    let write_manifest = |status: &str, body: &str| -> Result<()> {
        let text = format!("{}{body}[config]\n{}", header(status), config.to_kv());
        fs::write(dir.join("manifest.txt"), text)?;
        Ok(())
    };

    let outcome = separate_sequence(&seq.training, &seq.evaluation, sep, &op, cfg.mode, |t, s| {
        write_frame_f32(&dir.join(format!("fg_{t:04}.f32")), seq.height, seq.width, &s.foreground)?;
        write_frame_f32(&dir.join(format!("bg_{t:04}.f32")), seq.height, seq.width, &s.background)
    });
    let separations = match outcome {
        Ok(s) => s,
        Err(e) => {
            write_manifest("FAILED", &format!("error = {e}\n"))?;
            return Err(e);
        }
    };

    let foregrounds: Vec<Vec<f64>> = separations.iter().map(|s| s.foreground.clone()).collect();
    let (mut roc_area, mut mean_f1) = (None, None);
    if let Some(masks) = &seq.masks {
        let metrics = evaluate_roc(&foregrounds, masks, &default_thresholds(&foregrounds)).map(|roc| {
            let start = cfg.f1_start.min(foregrounds.len());
            let scored = &foregrounds[start..];
            let f1 = if scored.is_empty() {
                None
            } else {
                let total: f64 = scored
                    .iter()
                    .zip(&masks[start..])
                    .map(|(x, m)| support_f1(x, m, cfg.support_threshold))
                    .sum();
                Some(total / scored.len() as f64)
            };
            (roc, f1)
        });
        match metrics.and_then(|(roc, f1)| {
            fs::write(dir.join("roc.csv"), roc.to_csv())?;
            Ok((roc.area(), f1))
        }) {
            Ok((area, f1)) => {
                roc_area = Some(area);
                mean_f1 = f1;
            }
            Err(e) => {
                write_manifest("FAILED", &format!("error = {e}\n"))?;
                return Err(e);
            }
        }
    }

    let iterations = separations.iter().map(|s| s.trace.iterations()).sum();
    let converged_frames = separations.iter().filter(|s| s.trace.converged).count();
    let mut body = format!(
        "frames = {}\niterations = {iterations}\nconverged_frames = {converged_frames}\n",
        separations.len()
    );
    if let Some(a) = roc_area {
        writeln!(body, "roc_area = {a:.9}").expect("string write");
    }
    if let Some(f) = mean_f1 {
        writeln!(body, "mean_f1 = {f:.9}").expect("string write");
    }
    write_manifest("COMPLETE", &body)?;

    Ok(RateReport {
        rate,
        mode: cfg.mode,
        dir,
        operator: meta,
        frames: separations.len(),
        iterations,
        converged_frames,
        roc_area,
        mean_f1,
    })
}
