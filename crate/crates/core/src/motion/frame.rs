use crate::error::{invalid_input, Result};

/// A grayscale image stored row-major.
///
/// Ingested frames are clamped to `[0, 1]`; recovered foreground frames may
/// carry signed values and are wrapped without clamping via
/// [`Frame2D::from_raw`].
#[derive(Debug, Clone, PartialEq)]
pub struct Frame2D {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Frame2D {
    /// Wraps intensities, clamping each to `[0, 1]`.
    pub fn from_intensities(height: usize, width: usize, data: &[f64]) -> Result<Self> {
        check_dims(height, width, data.len())?;
        Ok(Self {
            height,
            width,
            data: data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        })
    }

    /// Wraps values as they are.
    pub fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid_input("frame contains non-finite values"));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Value at `(row, col)` with indices clamped into the frame.
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.data[r * self.width + c]
    }

    /// Bilinear sample at real coordinates, borders replicated.
    pub fn sample(&self, y: f64, x: f64) -> f64 {
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        let (r, c) = (y0 as isize, x0 as isize);
        let top = self.get_clamped(r, c) * (1.0 - fx) + self.get_clamped(r, c + 1) * fx;
        let bottom = self.get_clamped(r + 1, c) * (1.0 - fx) + self.get_clamped(r + 1, c + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

fn check_dims(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(invalid_input("frame dimensions must be positive"));
    }
    if height * width != len {
        return Err(invalid_input(format!(
            "{len} values cannot form a {height}x{width} frame"
        )));
    }
    Ok(())
}
