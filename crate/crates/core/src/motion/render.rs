//! Hue-coded flow rendering and flow/pixmap export.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::FlowField;

/// 8-bit RGB image, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Binary portable pixmap (P6).
    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)?;
        w.flush()?;
        Ok(())
    }

    /// RGBA bytes, for canvas blitting.
    pub fn to_rgba(&self) -> Vec<u8> {
        self.data
            .chunks_exact(3)
            .flat_map(|p| [p[0], p[1], p[2], 255])
            .collect()
    }
}

/// Hue from the flow direction, saturation from the magnitude normalized by
/// its 95th percentile, value fixed at 1. Zero flow renders white.
pub fn flow_to_color(flow: &FlowField) -> RgbImage {
    let n = flow.vx.len();
    let mut mags: Vec<f64> = (0..n).map(|i| flow.magnitude(i)).collect();
    let unsorted = mags.clone();
    mags.sort_by(f64::total_cmp);
    let mut norm = if n == 0 {
        0.0
    } else {
        mags[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1]
    };
    if norm == 0.0 {
        norm = mags.last().copied().unwrap_or(0.0);
    }

    let mut data = Vec::with_capacity(3 * n);
    for (i, &mag) in unsorted.iter().enumerate() {
        let saturation = if norm > 0.0 { (mag / norm).min(1.0) } else { 0.0 };
        let hue = flow.vy[i].atan2(flow.vx[i]).to_degrees().rem_euclid(360.0);
        data.extend_from_slice(&hsv_to_rgb(hue, saturation, 1.0));
    }
    RgbImage {
        height: flow.height,
        width: flow.width,
        data,
    }
}

pub(crate) fn hsv_to_rgb(hue: f64, saturation: f64, value: f64) -> [u8; 3] {
    let c = value * saturation;
    let h = hue / 60.0;
    let x = c * (1.0 - (h.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = value - c;
    let to_byte = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [to_byte(r), to_byte(g), to_byte(b)]
}

/// Writes `H`, `W` as little-endian u32 followed by `vx` then `vy` as
/// row-major little-endian f32.
pub fn write_flow(path: &Path, flow: &FlowField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(flow.height as u32).to_le_bytes())?;
    w.write_all(&(flow.width as u32).to_le_bytes())?;
    for v in flow.vx.iter().chain(&flow.vy) {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let ingest = |offset: usize, message: &str| Error::Ingest {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.to_string(),
    };
    if bytes.len() < 8 {
        return Err(ingest(bytes.len(), "truncated flow header"));
    }
    let height = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let width = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let n = height * width;
    if bytes.len() != 8 + 8 * n {
        return Err(ingest(8, "payload size does not match the header"));
    }
    let values: Vec<f64> = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok(FlowField {
        height,
        width,
        vx: values[..n].to_vec(),
        vy: values[n..].to_vec(),
    })
}
