use std::fs;
use std::path::Path;
use std::process::Command;

use corpca::linalg::{svd, DenseMatrix};
use corpca::pipeline::io::{
    load_frame, read_array_f64, read_frame_f32, read_pgm, write_array_f64, write_frame_f32, write_pgm,
};
use corpca::pipeline::roc::{default_thresholds, evaluate_roc};
use corpca::pipeline::{generate_synthetic, separate_sequence, ExperimentConfig, SequenceManifest, SyntheticSpec};
use corpca::{Error, MeasurementOperator, SeparationMode, SeparatorConfig};

#[test]
fn synthetic_background_has_the_configured_rank() {
    for rank in [1, 2, 4] {
        let params = SyntheticSpec {
            rank,
            frames: 20,
            ..SyntheticSpec::default()
        };
        let seq = generate_synthetic(&params).unwrap();
        let stacked = DenseMatrix::from_columns(&seq.background).unwrap();
        let s = svd(&stacked).unwrap().s;
        assert!(s[rank - 1] > 1e-3 * s[0], "rank {rank}: {s:?}");
        assert!(s[rank] <= 1e-10 * s[0], "rank {rank}: {s:?}");
    }
}

#[test]
fn synthetic_masks_cover_the_block_only_after_training() {
    let params = SyntheticSpec::default();
    let seq = generate_synthetic(&params).unwrap();
    let side = params.block_side();
    assert!(seq.training().iter().zip(&seq.background).all(|(f, b)| f == b));
    for mask in &seq.masks[..params.train_frames] {
        assert!(mask.iter().all(|&m| !m));
    }
    for mask in seq.evaluation_masks() {
        assert_eq!(mask.iter().filter(|&&m| m).count(), side * side);
    }
    assert_eq!(seq, generate_synthetic(&params).unwrap());
}

#[test]
fn full_rate_identity_recovers_the_support() {
    let params = SyntheticSpec {
        frames: 12,
        ..SyntheticSpec::default()
    };
    let seq = generate_synthetic(&params).unwrap();
    let mut cfg = SeparatorConfig::new(params.height, params.width);
    cfg.train_width = params.train_frames;
    let op = MeasurementOperator::new(params.n(), params.n(), 0).unwrap();
    assert!(op.is_identity());
    let out = separate_sequence(seq.training(), seq.evaluation(), &cfg, &op, SeparationMode::Corpca, |_, _| Ok(())).unwrap();
    let fg: Vec<Vec<f64>> = out.into_iter().map(|s| s.foreground).collect();
    let roc = evaluate_roc(&fg, seq.evaluation_masks(), &default_thresholds(&fg)).unwrap();
    assert!(roc.area() >= 0.99, "area {}", roc.area());
}

#[test]
fn config_round_trips_through_text() {
    let cfg = ExperimentConfig::parse(
        "# sweep\nrates = 0.2, 0.4\nmode = corpca-of\nlambda = 0.05\nmu0 = auto\nflow_alpha = 12.5\nreweight = false\nheight = 24\n",
    )
    .unwrap();
    assert_eq!(cfg.rates, vec![0.2, 0.4]);
    assert_eq!(cfg.mode, SeparationMode::CorpcaOf);
    assert_eq!(cfg.separator.lambda, Some(0.05));
    assert_eq!(cfg.separator.mu0, None);
    assert_eq!(cfg.synthetic.height, 24);
    assert_eq!(ExperimentConfig::parse(&cfg.to_kv()).unwrap(), cfg);
    assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
}

#[test]
fn config_rejects_bad_text() {
    for text in [
        "bogus = 1",
        "rates = 0.2\nrates = 0.4",
        "lambda",
        "max_iters = -3",
        "mode = fast",
        "reweight = maybe",
    ] {
        assert!(
            matches!(ExperimentConfig::parse(text), Err(Error::InvalidConfig(_))),
            "{text:?} parsed"
        );
    }
    let cfg = ExperimentConfig::parse("rates = 0.0").unwrap();
    assert!(cfg.validate().is_err());
}

#[test]
fn frame_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (h, w) = (3, 5);
    let data: Vec<f64> = (0..h * w).map(|i| i as f64 / 14.0).collect();

    let pgm = dir.path().join("a.pgm");
    write_pgm(&pgm, h, w, &data).unwrap();
    let back = read_pgm(&pgm).unwrap();
    assert_eq!((back.height, back.width), (h, w));
    assert!(back.data.iter().zip(&data).all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-12));
    assert_eq!(load_frame(&pgm).unwrap(), back);

    let raw = dir.path().join("a.f32");
    write_frame_f32(&raw, h, w, &data).unwrap();
    let back = read_frame_f32(&raw).unwrap();
    assert!(back.data.iter().zip(&data).all(|(a, b)| *a == (*b as f32) as f64));
    assert_eq!(fs::metadata(&raw).unwrap().len(), 8 + 4 * 15);
    assert_eq!(load_frame(&raw).unwrap(), back);

    let wide = dir.path().join("a.f64");
    write_array_f64(&wide, h, w, &data).unwrap();
    assert_eq!(read_array_f64(&wide).unwrap().data, data);
}

#[test]
fn malformed_frames_report_their_offset() {
    let dir = tempfile::tempdir().unwrap();
    let truncated = dir.path().join("t.pgm");
    fs::write(&truncated, b"P5\n4 4\n255\n\x01\x02").unwrap();
    match read_pgm(&truncated) {
        Err(Error::Ingest { offset, .. }) => assert_eq!(offset, 11),
        other => panic!("unexpected {other:?}"),
    }
    let short = dir.path().join("s.f32");
    fs::write(&short, [2u8, 0, 0, 0, 2, 0, 0, 0, 0, 0]).unwrap();
    assert!(matches!(read_frame_f32(&short), Err(Error::Ingest { .. })));
    assert!(matches!(read_pgm(&dir.path().join("missing.pgm")), Err(Error::Ingest { .. })));
}

#[test]
fn manifest_ranges_are_checked() {
    let base = Path::new("/data");
    let frames: String = (0..6).map(|i| format!("frame = f{i}.pgm\n")).collect();
    let ok = SequenceManifest::parse(&format!("height = 4\nwidth = 4\ntrain = 0..3\neval = 3..6\n{frames}"), base).unwrap();
    assert_eq!(ok.frames[0], base.join("f0.pgm"));
    for ranges in ["train = 0..4\neval = 3..6", "train = 0..3\neval = 3..7", "train = 2..2\neval = 3..6"] {
        let text = format!("height = 4\nwidth = 4\n{ranges}\n{frames}");
        assert!(SequenceManifest::parse(&text, base).is_err(), "{ranges:?}");
    }
}

fn corpca() -> Command {
    Command::new(env!("CARGO_BIN_EXE_corpca"))
}

#[test]
fn cli_synth_then_separate() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.cfg");
    fs::write(&config, "height = 16\nwidth = 16\ntrain_frames = 8\nframes = 3\nsparsity = 0.06\n").unwrap();
    let seq_dir = dir.path().join("seq");
    let status = corpca()
        .args(["synth", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&seq_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(seq_dir.join("sequence.txt").is_file());
    assert!(seq_dir.join("frame_0010.pgm").is_file());

    let out = dir.path().join("out");
    let run = corpca()
        .args(["separate", "--rate", "0.5", "--manifest"])
        .arg(seq_dir.join("sequence.txt"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report = String::from_utf8(run.stdout).unwrap();
    assert!(report.starts_with("mode,rate,"));
    let rate_dir = out.join("corpca_rate0.50");
    for name in ["fg_0000.f32", "bg_0002.f32", "roc.csv", "manifest.txt"] {
        assert!(rate_dir.join(name).is_file(), "{name} missing");
    }
    let manifest = fs::read_to_string(rate_dir.join("manifest.txt")).unwrap();
    assert!(manifest.starts_with("status = COMPLETE"), "{manifest}");
}

#[test]
fn cli_rejects_bad_config_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.cfg");
    fs::write(&config, "no_such_key = 3\n").unwrap();
    let out = corpca()
        .args(["separate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}
