//! Dense per-pixel image grids: direction fields, object masks and
//! segmentation scores. All grids are row-major.

use crate::error::{Error, Result};
use crate::geometry::{pixel_center, Direction2, Point2};

fn check_len(width: usize, height: usize, len: usize) -> Result<()> {
    if width * height != len {
        return Err(Error::Config(format!(
            "grid data has {len} entries, expected {width}x{height}"
        )));
    }
    Ok(())
}

fn check_dims(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Per-pixel direction estimates for one keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    width: usize,
    height: usize,
    data: Vec<Direction2>,
}

impl VectorField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![Direction2::ZERO; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<Direction2>) -> Result<Self> {
        check_len(width, height, data.len())?;
        if let Some(i) = data.iter().position(|d| !d.is_finite()) {
            return Err(Error::Config(format!(
                "non-finite direction at row {}, col {}",
                i / width.max(1),
                i % width.max(1)
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, row: usize, col: usize) -> Direction2 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: Direction2) {
        self.data[row * self.width + col] = v;
    }

    pub fn as_slice(&self) -> &[Direction2] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Direction2] {
        &mut self.data
    }

    pub(crate) fn check_matches(&self, dims: (usize, usize)) -> Result<()> {
        check_dims(self.dims(), dims)
    }
}

/// Object mask: `true` marks an object pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_len(width, height, data.len())?;
        Ok(Self { width, height, data })
    }

    /// Filled disc of pixels whose centers lie within `radius` of `center`.
    pub fn disc(width: usize, height: usize, center: Point2, radius: f64) -> Self {
        let mut m = Self::empty(width, height);
        for row in 0..height {
            for col in 0..width {
                if pixel_center(row, col).distance(center) <= radius {
                    m.set(row, col, true);
                }
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        self.data[row * self.width + col] = on;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Flat indices of masked pixels, in row-major order.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data.iter().enumerate().filter_map(|(i, &b)| b.then_some(i))
    }

    /// Pixel center of a flat index.
    pub fn center_of(&self, index: usize) -> Point2 {
        pixel_center(index / self.width, index % self.width)
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub(crate) fn check_matches(&self, dims: (usize, usize)) -> Result<()> {
        check_dims(self.dims(), dims)
    }
}

/// Foreground probabilities, clamped into `[SCORE_FLOOR, 1 - SCORE_FLOOR]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegScores {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

pub const SCORE_FLOOR: f64 = 1e-7;

impl SegScores {
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_len(width, height, data.len())?;
        if data.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("NaN segmentation score".into()));
        }
        let data = data
            .into_iter()
            .map(|s| s.clamp(SCORE_FLOOR, 1.0 - SCORE_FLOOR))
            .collect();
        Ok(Self { width, height, data })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}
