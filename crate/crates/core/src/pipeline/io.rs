//! Grayscale frame files and sequence manifests.
//!
//! Two frame formats are read: binary PGM (`P5`, maxval up to 255) and a raw
//! little-endian layout of `u32` height, `u32` width and row-major `f32`
//! samples. `f64` arrays (checkpoints) use the same header with `f64`
//! samples.

use std::fs;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use crate::error::{invalid_config, invalid_input, Error, Result};

/// One frame as row-major samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameData {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

fn ingest(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| ingest(path, 0, e.to_string()))
}

/// Parses the next whitespace-separated PGM header token, skipping comments.
fn header_token(bytes: &[u8], pos: &mut usize) -> Option<(usize, String)> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| (start, String::from_utf8_lossy(&bytes[start..*pos]).into_owned()))
}

/// Binary PGM, intensities divided by maxval.
pub fn read_pgm(path: &Path) -> Result<FrameData> {
    let bytes = read_bytes(path)?;
    let mut pos = 0;
    match header_token(&bytes, &mut pos) {
        Some((_, magic)) if magic == "P5" => {}
        _ => return Err(ingest(path, 0, "missing P5 magic")),
    }
    let mut fields = [0usize; 3];
    for (i, name) in ["width", "height", "maxval"].iter().enumerate() {
        let (at, token) = header_token(&bytes, &mut pos).ok_or_else(|| ingest(path, pos, format!("missing {name}")))?;
        fields[i] = token
            .parse()
            .map_err(|_| ingest(path, at, format!("malformed {name} {token:?}")))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(ingest(path, pos, "zero frame dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(ingest(path, pos, format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(ingest(path, pos, "missing raster separator"));
    }
    pos += 1;
    let n = width * height;
    if bytes.len() - pos != n {
        return Err(ingest(
            path,
            pos,
            format!("expected {n} raster bytes, found {}", bytes.len() - pos),
        ));
    }
    let scale = maxval as f64;
    Ok(FrameData {
        height,
        width,
        data: bytes[pos..].iter().map(|&b| (b as f64 / scale).min(1.0)).collect(),
    })
}

/// Writes `data` (clamped to `[0, 1]`) as 8-bit binary PGM.
pub fn write_pgm(path: &Path, height: usize, width: usize, data: &[f64]) -> Result<()> {
    if data.len() != height * width {
        return Err(invalid_input("frame size does not match its dimensions"));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "P5\n{width} {height}\n255\n")?;
    let raster: Vec<u8> = data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    w.write_all(&raster)?;
    w.flush()?;
    Ok(())
}

fn write_raw(path: &Path, height: usize, width: usize, payload: impl Iterator<Item = Vec<u8>>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&(height as u32).to_le_bytes())?;
    w.write_all(&(width as u32).to_le_bytes())?;
    for chunk in payload {
        w.write_all(&chunk)?;
    }
    w.flush()?;
    Ok(())
}

fn check_dims(height: usize, width: usize, len: usize) -> Result<()> {
    if height * width != len {
        return Err(invalid_input(format!("{len} samples do not form a {height}x{width} frame")));
    }
    if height > u32::MAX as usize || width > u32::MAX as usize {
        return Err(invalid_input("frame dimensions exceed the u32 header"));
    }
    Ok(())
}

/// `u32` height, `u32` width, row-major `f32` samples, little-endian.
pub fn write_frame_f32(path: &Path, height: usize, width: usize, data: &[f64]) -> Result<()> {
    check_dims(height, width, data.len())?;
    write_raw(path, height, width, data.iter().map(|v| (*v as f32).to_le_bytes().to_vec()))
}

/// Same header with `f64` samples; reloads bitwise.
pub fn write_array_f64(path: &Path, rows: usize, cols: usize, data: &[f64]) -> Result<()> {
    check_dims(rows, cols, data.len())?;
    write_raw(path, rows, cols, data.iter().map(|v| v.to_le_bytes().to_vec()))
}

fn read_raw(path: &Path, sample: usize) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = read_bytes(path)?;
    if bytes.len() < 8 {
        return Err(ingest(path, bytes.len(), "truncated header"));
    }
    let height = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let width = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(sample))
        .ok_or_else(|| ingest(path, 0, "header dimensions overflow"))?;
    if bytes.len() - 8 != expected {
        return Err(ingest(
            path,
            8,
            format!("expected {expected} payload bytes for {height}x{width}, found {}", bytes.len() - 8),
        ));
    }
    Ok((height, width, bytes[8..].to_vec()))
}

pub fn read_frame_f32(path: &Path) -> Result<FrameData> {
    let (height, width, payload) = read_raw(path, 4)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok(FrameData { height, width, data })
}

pub fn read_array_f64(path: &Path) -> Result<FrameData> {
    let (height, width, payload) = read_raw(path, 8)?;
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(FrameData { height, width, data })
}

/// Reads a PGM or `f32` frame, chosen by the leading `P5` magic.
pub fn load_frame(path: &Path) -> Result<FrameData> {
    let head = {
        let bytes = read_bytes(path)?;
        bytes.get(..2).map(<[u8]>::to_vec)
    };
    match head.as_deref() {
        Some(b"P5") => read_pgm(path),
        _ => read_frame_f32(path),
    }
}

/// Frame files of one sequence plus its training and evaluation ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub height: usize,
    pub width: usize,
    pub frames: Vec<PathBuf>,
    /// Ground-truth masks for the evaluation range (nonzero = foreground).
    pub masks: Vec<PathBuf>,
    pub train: Range<usize>,
    pub eval: Range<usize>,
}

fn parse_range(key: &str, value: &str) -> Result<Range<usize>> {
    let (a, b) = value
        .split_once("..")
        .ok_or_else(|| invalid_config(format!("{key} must look like start..end")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| invalid_config(format!("malformed {key} bound {s:?}")))
    };
    Ok(parse(a)?..parse(b)?)
}

impl SequenceManifest {
    /// `height`, `width`, `train = a..b`, `eval = c..d` and repeated
    /// `frame = path` / `mask = path` lines. Relative paths are resolved
    /// against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut m = SequenceManifest {
            height: 0,
            width: 0,
            frames: Vec::new(),
            masks: Vec::new(),
            train: 0..0,
            eval: 0..0,
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid_config(format!("manifest line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let number = || {
                value
                    .parse::<usize>()
                    .map_err(|_| invalid_config(format!("malformed {key} {value:?}")))
            };
            match key {
                "height" => m.height = number()?,
                "width" => m.width = number()?,
                "train" => m.train = parse_range(key, value)?,
                "eval" => m.eval = parse_range(key, value)?,
                "frame" => m.frames.push(base.join(value)),
                "mask" => m.masks.push(base.join(value)),
                other => return Err(invalid_config(format!("unknown manifest key {other:?}"))),
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&fs::read_to_string(path)?, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(invalid_config("manifest needs positive height and width"));
        }
        let n = self.frames.len();
        for (name, r) in [("train", &self.train), ("eval", &self.eval)] {
            if r.start >= r.end || r.end > n {
                return Err(invalid_config(format!("{name} range {r:?} is empty or exceeds {n} frames")));
            }
        }
        if self.train.end > self.eval.start && self.eval.end > self.train.start {
            return Err(invalid_config("training and evaluation ranges overlap"));
        }
        if !self.masks.is_empty() && self.masks.len() != self.eval.len() {
            return Err(invalid_config("mask count must match the evaluation range"));
        }
        Ok(())
    }
}

/// Frames and masks of a manifest, vectorized row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSequence {
    pub height: usize,
    pub width: usize,
    pub training: Vec<Vec<f64>>,
    pub evaluation: Vec<Vec<f64>>,
    pub masks: Option<Vec<Vec<bool>>>,
}

fn load_checked(path: &Path, height: usize, width: usize) -> Result<Vec<f64>> {
    let frame = load_frame(path)?;
    if frame.height != height || frame.width != width {
        return Err(ingest(
            path,
            0,
            format!(
                "frame is {}x{}, manifest says {height}x{width}",
                frame.height, frame.width
            ),
        ));
    }
    Ok(frame.data)
}

pub fn load_sequence(manifest: &SequenceManifest) -> Result<LoadedSequence> {
    manifest.validate()?;
    let (h, w) = (manifest.height, manifest.width);
    let load_range = |r: &Range<usize>| -> Result<Vec<Vec<f64>>> {
        manifest.frames[r.clone()].iter().map(|p| load_checked(p, h, w)).collect()
    };
    let masks = if manifest.masks.is_empty() {
        None
    } else {
        Some(
            manifest
                .masks
                .iter()
                .map(|p| Ok(load_checked(p, h, w)?.into_iter().map(|v| v > 0.0).collect()))
                .collect::<Result<_>>()?,
        )
    };
    Ok(LoadedSequence {
        height: h,
        width: w,
        training: load_range(&manifest.train)?,
        evaluation: load_range(&manifest.eval)?,
        masks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_definition() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let mut bytes = b"P5 4 3 255\n".to_vec();
        bytes.extend((0..12u8).map(|i| if i == 5 { 255 } else { i * 10 }));
        fs::write(&path, &bytes).unwrap();
        let f = read_pgm(&path).unwrap();
        assert_eq!((f.height, f.width, f.data.len()), (3, 4, 12));
        assert_eq!(f.data[5], 1.0);
        assert!(f.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn pgm_with_comment_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.pgm");
        fs::write(&path, b"P5\n# made by hand\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!(read_pgm(&path).unwrap().data, vec![0.0, 1.0]);
        write_pgm(&path, 1, 2, &[0.0, 1.0]).unwrap();
        assert_eq!(load_frame(&path).unwrap().data, vec![0.0, 1.0]);
    }

    #[test]
    fn malformed_headers_report_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        fs::write(&path, b"P5 4 x 255\n").unwrap();
        match read_pgm(&path) {
            Err(Error::Ingest { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
        fs::write(&path, b"P5 2 2 255\n\x00").unwrap();
        assert!(matches!(read_pgm(&path), Err(Error::Ingest { offset: 11, .. })));
        fs::write(&path, b"P6 2 2 255\n\x00").unwrap();
        assert!(matches!(read_pgm(&path), Err(Error::Ingest { offset: 0, .. })));
        assert!(matches!(read_pgm(&dir.path().join("missing.pgm")), Err(Error::Ingest { .. })));
    }

    #[test]
    fn f32_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let data: Vec<f64> = (0..6).map(|i| (i as f32 * 0.37) as f64).collect();
        write_frame_f32(&path, 2, 3, &data).unwrap();
        let bytes = fs::read(&path).unwrap();
        let back = read_frame_f32(&path).unwrap();
        assert_eq!(back.data, data);
        write_frame_f32(&path, 2, 3, &back.data).unwrap();
        assert_eq!(fs::read(&path).unwrap(), bytes);
        fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_frame_f32(&path), Err(Error::Ingest { offset: 8, .. })));
    }

    #[test]
    fn f64_arrays_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bin");
        let data = vec![0.1, -2.5e-300, 7.0, f64::MAX];
        write_array_f64(&path, 2, 2, &data).unwrap();
        assert_eq!(read_array_f64(&path).unwrap().data, data);
    }

    #[test]
    fn manifest_loading() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..4 {
            write_pgm(&dir.path().join(format!("f{i}.pgm")), 2, 2, &[0.5; 4]).unwrap();
        }
        write_pgm(&dir.path().join("m.pgm"), 2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        let text = "height = 2\nwidth = 2\ntrain = 0..3\neval = 3..4\nframe = f0.pgm\nframe = f1.pgm\nframe = f2.pgm\nframe = f3.pgm\nmask = m.pgm\n";
        let path = dir.path().join("seq.txt");
        fs::write(&path, text).unwrap();
        let seq = load_sequence(&SequenceManifest::load(&path).unwrap()).unwrap();
        assert_eq!(seq.training.len(), 3);
        assert_eq!(seq.evaluation.len(), 1);
        assert_eq!(seq.masks.unwrap()[0], vec![false, true, false, false]);

        assert!(SequenceManifest::parse(&text.replace("eval = 3..4", "eval = 2..4"), dir.path()).is_err());
        assert!(SequenceManifest::parse(&text.replace("height = 2", "height = 3"), dir.path())
            .and_then(|m| load_sequence(&m))
            .is_err());
    }
}
