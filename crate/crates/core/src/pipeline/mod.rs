//! Frame I/O, synthetic sequences, ROC evaluation, configuration and
//! experiment orchestration.

pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod io;
pub mod roc;
pub mod synth;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, OperatorMeta};
pub use config::ExperimentConfig;
pub use experiment::{run_experiment, separate_sequence, ExperimentReport, RateReport, Source};
pub use io::{load_sequence, LoadedSequence, SequenceManifest};
pub use roc::{evaluate_roc, support_f1, RocCurve};
pub use synth::{generate_synthetic, SyntheticSequence, SyntheticSpec};
