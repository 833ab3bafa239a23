//! Engine state on disk: a `key = value` manifest plus `f64` arrays for the
//! background factors and the sparse priors.

use std::fs;
use std::path::Path;

use crate::engine::EngineState;
use crate::error::{invalid_config, Error, Result};
use crate::linalg::{DenseMatrix, SvdFactors};
use crate::measurement::MeasurementOperator;

use super::io::{read_array_f64, write_array_f64};

const MANIFEST: &str = "checkpoint.txt";

/// Operator identity as recorded in manifests (never the raw entries).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorMeta {
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub generator: String,
}

impl OperatorMeta {
    pub fn of(op: &MeasurementOperator) -> Self {
        Self {
            m: op.m(),
            n: op.n(),
            seed: op.seed(),
            generator: op.generator().to_string(),
        }
    }

    /// Rebuilds the operator, refusing a different generator.
    pub fn build(&self) -> Result<MeasurementOperator> {
        let op = MeasurementOperator::new(self.m, self.n, self.seed)?;
        if op.generator() != self.generator {
            return Err(invalid_config(format!(
                "operator was drawn with {}, this build uses {}",
                self.generator,
                op.generator()
            )));
        }
        Ok(op)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: EngineState,
    pub operator: OperatorMeta,
    /// Experiment configuration in `key = value` form.
    pub config: String,
}

pub fn save_checkpoint(dir: &Path, checkpoint: &Checkpoint) -> Result<()> {
    fs::create_dir_all(dir)?;
    let state = &checkpoint.state;
    let b = &state.background;
    write_array_f64(&dir.join("background_u.bin"), b.u.rows(), b.u.cols(), b.u.data())?;
    write_array_f64(&dir.join("background_s.bin"), 1, b.s.len(), &b.s)?;
    write_array_f64(&dir.join("background_v.bin"), b.v.rows(), b.v.cols(), b.v.data())?;
    for (j, z) in state.sparse_priors.iter().enumerate() {
        write_array_f64(&dir.join(format!("prior_{j}.bin")), 1, z.len(), z)?;
    }
    let op = &checkpoint.operator;
    let mut text = format!(
        "t = {}\npriors = {}\noperator_m = {}\noperator_n = {}\noperator_seed = {}\ngenerator = {}\n",
        state.t,
        state.sparse_priors.len(),
        op.m,
        op.n,
        op.seed,
        op.generator
    );
    text.push_str("[config]\n");
    text.push_str(&checkpoint.config);
    fs::write(dir.join(MANIFEST), text)?;
    Ok(())
}

fn matrix(path: &Path) -> Result<DenseMatrix> {
    let a = read_array_f64(path)?;
    DenseMatrix::from_vec(a.height, a.width, a.data)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path)?;
    let (head, config) = text
        .split_once("[config]\n")
        .ok_or_else(|| invalid_config("checkpoint manifest lacks a [config] section"))?;
    let mut fields = std::collections::HashMap::new();
    for line in head.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| invalid_config(format!("malformed checkpoint line {line:?}")))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |key: &str| -> Result<&str> {
        fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| invalid_config(format!("checkpoint manifest lacks {key}")))
    };
    let number = |key: &str| -> Result<u64> {
        get(key)?
            .parse()
            .map_err(|_| invalid_config(format!("malformed checkpoint field {key}")))
    };

    let background = SvdFactors {
        u: matrix(&dir.join("background_u.bin"))?,
        s: read_array_f64(&dir.join("background_s.bin"))?.data,
        v: matrix(&dir.join("background_v.bin"))?,
    };
    let n = background.u.rows();
    let priors = number("priors")? as usize;
    let sparse_priors = (0..priors)
        .map(|j| {
            let p = dir.join(format!("prior_{j}.bin"));
            let z = read_array_f64(&p)?;
            if z.data.len() != n {
                return Err(Error::Ingest {
                    path: p,
                    offset: 0,
                    message: format!("prior has {} samples, background has {n} rows", z.data.len()),
                });
            }
            Ok(z.data)
        })
        .collect::<Result<_>>()?;

    Ok(Checkpoint {
        state: EngineState {
            background,
            sparse_priors,
            t: number("t")? as usize,
        },
        operator: OperatorMeta {
            m: number("operator_m")? as usize,
            n: number("operator_n")? as usize,
            seed: number("operator_seed")?,
            generator: get("generator")?.to_string(),
        },
        config: config.to_string(),
    })
}
