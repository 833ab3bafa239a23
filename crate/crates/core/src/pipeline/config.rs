//! Flat `key = value` configuration shared by the CLI and run manifests.
//!
//! Blank lines and `#` comments are ignored. Unknown or repeated keys are
//! errors. `height`, `width` and `train_frames` configure both the separator
//! and the synthetic generator.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::engine::{SeparationMode, SeparatorConfig};
use crate::error::{invalid_config, Result};

use super::synth::SyntheticSpec;

/// Support threshold frozen after the pilot runs on the default sequence.
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub separator: SeparatorConfig,
    pub synthetic: SyntheticSpec,
    /// Measurement rates `m/n`.
    pub rates: Vec<f64>,
    pub mode: SeparationMode,
    /// Seed of the first operator; rate `i` uses `operator_seed + i`.
    pub operator_seed: u64,
    /// Magnitude above which a recovered pixel counts as foreground.
    pub support_threshold: f64,
    /// First evaluation frame included in the mean F1.
    pub f1_start: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let synthetic = SyntheticSpec::default();
        let mut separator = SeparatorConfig::new(synthetic.height, synthetic.width);
        separator.train_width = synthetic.train_frames;
        Self {
            separator,
            synthetic,
            rates: vec![0.6],
            mode: SeparationMode::Corpca,
            operator_seed: 1,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
            f1_start: 10,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| invalid_config(format!("cannot parse {key} = {value:?}")))
}

fn parse_auto(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(invalid_config(format!("cannot parse {key} = {value:?} as a boolean"))),
    }
}

fn fmt_auto(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let sep = &mut self.separator;
        let syn = &mut self.synthetic;
        match key {
            "height" => {
                sep.height = parse(key, value)?;
                syn.height = sep.height;
            }
            "width" => {
                sep.width = parse(key, value)?;
                syn.width = sep.width;
            }
            "train_frames" => {
                sep.train_width = parse(key, value)?;
                syn.train_frames = sep.train_width;
            }
            "lambda" => sep.lambda = parse_auto(key, value)?,
            "mu_bar" => sep.mu_bar = parse(key, value)?,
            "mu0" => sep.mu0 = parse_auto(key, value)?,
            "epsilon" => sep.epsilon = parse(key, value)?,
            "mu_decay" => sep.mu_decay = parse(key, value)?,
            "prior_count" => sep.prior_count = parse(key, value)?,
            "max_iters" => sep.max_iters = parse(key, value)?,
            "tol_scale" => sep.tol_scale = parse(key, value)?,
            "reweight" => sep.reweight = parse_bool(key, value)?,
            "flow_levels" => sep.flow.levels = parse(key, value)?,
            "flow_alpha" => sep.flow.alpha = parse(key, value)?,
            "flow_warps" => sep.flow.warps = parse(key, value)?,
            "flow_jacobi_iters" => sep.flow.jacobi_iters = parse(key, value)?,
            "rank" => syn.rank = parse(key, value)?,
            "drift" => syn.drift = parse(key, value)?,
            "block_size" => syn.block_size = parse(key, value)?,
            "velocity_x" => syn.velocity_x = parse(key, value)?,
            "velocity_y" => syn.velocity_y = parse(key, value)?,
            "intensity" => syn.intensity = parse(key, value)?,
            "sparsity" => syn.sparsity = parse(key, value)?,
            "noise" => syn.noise = parse(key, value)?,
            "seed" => syn.seed = parse(key, value)?,
            "frames" => syn.frames = parse(key, value)?,
            "rates" => {
                self.rates = value
                    .split(',')
                    .map(|r| parse(key, r.trim()))
                    .collect::<Result<_>>()?
            }
            "mode" => self.mode = value.parse().map_err(|_| invalid_config(format!("unknown mode {value:?}")))?,
            "operator_seed" => self.operator_seed = parse(key, value)?,
            "support_threshold" => self.support_threshold = parse(key, value)?,
            "f1_start" => self.f1_start = parse(key, value)?,
            other => return Err(invalid_config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid_config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(invalid_config(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
            self.set(key, value.trim())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.separator.validate()?;
        self.synthetic.validate()?;
        if self.rates.is_empty() {
            return Err(invalid_config("at least one measurement rate is required"));
        }
        if let Some(r) = self.rates.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(invalid_config(format!("measurement rate {r} outside (0, 1]")));
        }
        if !(self.support_threshold > 0.0 && self.support_threshold.is_finite()) {
            return Err(invalid_config("support_threshold must be positive"));
        }
        Ok(())
    }

    /// Every key with its current value; parses back to an equal config.
    pub fn to_kv(&self) -> String {
        let sep = &self.separator;
        let syn = &self.synthetic;
        let rates: Vec<String> = self.rates.iter().map(|r| r.to_string()).collect();
        let pairs: Vec<(&str, String)> = vec![
            ("height", sep.height.to_string()),
            ("width", sep.width.to_string()),
            ("train_frames", sep.train_width.to_string()),
            ("lambda", fmt_auto(sep.lambda)),
            ("mu_bar", sep.mu_bar.to_string()),
            ("mu0", fmt_auto(sep.mu0)),
            ("epsilon", sep.epsilon.to_string()),
            ("mu_decay", sep.mu_decay.to_string()),
            ("prior_count", sep.prior_count.to_string()),
            ("max_iters", sep.max_iters.to_string()),
            ("tol_scale", sep.tol_scale.to_string()),
            ("reweight", sep.reweight.to_string()),
            ("flow_levels", sep.flow.levels.to_string()),
            ("flow_alpha", sep.flow.alpha.to_string()),
            ("flow_warps", sep.flow.warps.to_string()),
            ("flow_jacobi_iters", sep.flow.jacobi_iters.to_string()),
            ("rank", syn.rank.to_string()),
            ("drift", syn.drift.to_string()),
            ("block_size", syn.block_size.to_string()),
            ("velocity_x", syn.velocity_x.to_string()),
            ("velocity_y", syn.velocity_y.to_string()),
            ("intensity", syn.intensity.to_string()),
            ("sparsity", syn.sparsity.to_string()),
            ("noise", syn.noise.to_string()),
            ("seed", syn.seed.to_string()),
            ("frames", syn.frames.to_string()),
            ("rates", rates.join(",")),
            ("mode", self.mode.to_string()),
            ("operator_seed", self.operator_seed.to_string()),
            ("support_threshold", self.support_threshold.to_string()),
            ("f1_start", self.f1_start.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            writeln!(out, "{k} = {v}").expect("string write");
        }
        out
    }
}
