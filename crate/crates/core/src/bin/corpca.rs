use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use corpca::motion::{estimate_flow, flow_to_color, write_flow, FlowConfig, Frame2D};
use corpca::pipeline::io::{load_frame, read_frame_f32, write_pgm};
use corpca::pipeline::roc::{default_thresholds, evaluate_roc};
use corpca::pipeline::{generate_synthetic, run_experiment, ExperimentConfig, SequenceManifest, Source};
use corpca::{Error, Result, SeparationMode};

#[derive(Parser)]
#[command(name = "corpca", version, about = "Compressive online video foreground/background separation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Separate a sequence at one or more measurement rates.
    Separate {
        /// Sequence manifest; the configured synthetic sequence is used when absent.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// key = value configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Measurement rates m/n, overriding the configuration.
        #[arg(long, value_delimiter = ',')]
        rate: Vec<f64>,
        /// corpca or corpca-of, overriding the configuration.
        #[arg(long)]
        mode: Option<SeparationMode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the configured synthetic sequence as PGM frames and masks.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// ROC curve of recovered foregrounds against ground-truth masks.
    Roc {
        /// Directory of fg_*.f32 frames.
        #[arg(long)]
        fg_dir: PathBuf,
        /// Directory of mask frames (PGM or f32), matched in name order.
        #[arg(long)]
        masks: PathBuf,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optical flow between two frames.
    Flow {
        reference: PathBuf,
        target: PathBuf,
        /// Flow binary destination.
        #[arg(long)]
        out: PathBuf,
        /// Hue-coded PPM destination.
        #[arg(long)]
        color: Option<PathBuf>,
        #[arg(long, default_value_t = FlowConfig::default().levels)]
        levels: usize,
        #[arg(long, default_value_t = FlowConfig::default().alpha)]
        alpha: f64,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn sorted_files(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with(prefix))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Separate {
            manifest,
            config,
            rate,
            mode,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if !rate.is_empty() {
                cfg.rates = rate;
            }
            if let Some(m) = mode {
                cfg.mode = m;
            }
            let source = match manifest {
                Some(p) => Source::Manifest(SequenceManifest::load(&p)?),
                None => Source::Synthetic,
            };
            let report = run_experiment(&source, &cfg, &out)?;
            print!("{}", report.to_text());
        }
        Command::Synth { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let seq = generate_synthetic(&cfg.synthetic)?;
            fs::create_dir_all(&out)?;
            let (h, w) = (seq.height, seq.width);
            let mut manifest = format!(
                "height = {h}\nwidth = {w}\ntrain = 0..{}\neval = {}..{}\n",
                seq.train_frames,
                seq.train_frames,
                seq.frames.len()
            );
            for (t, frame) in seq.frames.iter().enumerate() {
                let name = format!("frame_{t:04}.pgm");
                write_pgm(&out.join(&name), h, w, frame)?;
                manifest.push_str(&format!("frame = {name}\n"));
            }
            for (t, mask) in seq.evaluation_masks().iter().enumerate() {
                let name = format!("mask_{t:04}.pgm");
                let values: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
                write_pgm(&out.join(&name), h, w, &values)?;
                manifest.push_str(&format!("mask = {name}\n"));
            }
            fs::write(out.join("sequence.txt"), manifest)?;
            println!("{} frames written to {}", seq.frames.len(), out.display());
        }
        Command::Roc { fg_dir, masks, out } => {
            let fg: Vec<Vec<f64>> = sorted_files(&fg_dir, "fg_")?
                .iter()
                .map(|p| read_frame_f32(p).map(|f| f.data))
                .collect::<Result<_>>()?;
            let mask: Vec<Vec<bool>> = sorted_files(&masks, "")?
                .iter()
                .map(|p| load_frame(p).map(|f| f.data.iter().map(|&v| v > 0.0).collect()))
                .collect::<Result<_>>()?;
            let roc = evaluate_roc(&fg, &mask, &default_thresholds(&fg))?;
            match out {
                Some(p) => fs::write(p, roc.to_csv())?,
                None => print!("{}", roc.to_csv()),
            }
            eprintln!("area {:.6}", roc.area());
        }
        Command::Flow {
            reference,
            target,
            out,
            color,
            levels,
            alpha,
        } => {
            let load = |p: &Path| -> Result<Frame2D> {
                let f = load_frame(p)?;
                Frame2D::from_intensities(f.height, f.width, &f.data)
            };
            let cfg = FlowConfig {
                levels,
                alpha,
                ..FlowConfig::default()
            };
            let flow = estimate_flow(&load(&reference)?, &load(&target)?, &cfg)?;
            write_flow(&out, &flow)?;
            if let Some(c) = color {
                flow_to_color(&flow).write_ppm(&c)?;
            }
            println!("max displacement {:.3} px", flow.max_magnitude());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) | Error::InvalidInput(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
