//! Planar images and binary inpainting masks on a rectangular pixel grid.
//!
//! Every per-channel buffer is stored row-major: pixel `(x, y)` lives at
//! index `y * width + x`.

use crate::error::{Error, Result};

/// Grid constants `(h_x, h_y)`. The finest grid uses unit spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spacing {
    pub hx: f64,
    pub hy: f64,
}

impl Spacing {
    pub const UNIT: Spacing = Spacing { hx: 1.0, hy: 1.0 };

    pub fn new(hx: f64, hy: f64) -> Result<Self> {
        if !(hx > 0.0 && hy > 0.0 && hx.is_finite() && hy.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive, got ({hx}, {hy})"
            )));
        }
        Ok(Spacing { hx, hy })
    }

    /// Stencil weights `(1/h_x², 1/h_y²)` for horizontal and vertical neighbours.
    pub fn weights(&self) -> (f64, f64) {
        (1.0 / (self.hx * self.hx), 1.0 / (self.hy * self.hy))
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Spacing::UNIT
    }
}

/// Width and height of a pixel grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
}

impl Shape {
    pub fn new(width: usize, height: usize) -> Self {
        Shape { width, height }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Next coarser grid: `⌈N/2⌉` pixels in each direction.
    pub fn coarsened(&self) -> Shape {
        Shape {
            width: self.width.div_ceil(2),
            height: self.height.div_ceil(2),
        }
    }
}

/// A planar multi-channel image of real intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelField {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    spacing: Spacing,
}

impl PixelField {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::check_dims(width, height, channels)?;
        Ok(PixelField {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
            spacing: Spacing::UNIT,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        let mut f = Self::zeros(width, height, channels)?;
        f.data.fill(value);
        Ok(f)
    }

    /// Builds a field from channel-major planar data.
    pub fn from_planar(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::check_dims(width, height, channels)?;
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values for {width}x{height}x{channels}, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(PixelField {
            width,
            height,
            channels,
            data,
            spacing: Spacing::UNIT,
        })
    }

    pub fn from_gray(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_planar(width, height, 1, data)
    }

    /// Builds a field from a list of single-channel planes.
    pub fn from_planes(width: usize, height: usize, planes: Vec<Vec<f64>>) -> Result<Self> {
        let channels = planes.len();
        let mut data = Vec::with_capacity(width * height * channels);
        for p in planes {
            if p.len() != width * height {
                return Err(Error::DimensionMismatch(format!(
                    "plane has {} values, expected {}",
                    p.len(),
                    width * height
                )));
            }
            data.extend(p);
        }
        Self::from_planar(width, height, channels, data)
    }

    fn check_dims(width: usize, height: usize, channels: usize) -> Result<()> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParameter(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        Ok(())
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.width, self.height)
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.pixel_count();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn planes(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.pixel_count())
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[c * self.pixel_count() + y * self.width + x]
    }

    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f64) {
        let n = self.pixel_count();
        self.data[c * n + y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_planar(self) -> Vec<f64> {
        self.data
    }

    /// Returns a copy with every value clamped to `[lo, hi]`.
    pub fn clamped(&self, lo: f64, hi: f64) -> PixelField {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = v.clamp(lo, hi);
        }
        out
    }

    /// Zeroes every pixel that is not flagged in `mask` (the compressed image `c∘f`).
    pub fn masked(&self, mask: &InpaintMask) -> Result<PixelField> {
        mask.check_shape(self.shape())?;
        let mut out = self.clone();
        for c in 0..self.channels {
            for (v, &s) in out.channel_mut(c).iter_mut().zip(mask.bits()) {
                if !s {
                    *v = 0.0;
                }
            }
        }
        Ok(out)
    }
}

/// Binary per-pixel flags; `true` marks a stored pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InpaintMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl InpaintMask {
    pub fn empty(width: usize, height: usize) -> Self {
        InpaintMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        InpaintMask {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} bits, expected {}",
                bits.len(),
                width * height
            )));
        }
        Ok(InpaintMask { width, height, bits })
    }

    /// Parses rows of `0`/`1` entries; handy for small fixtures.
    pub fn from_rows(rows: &[&[u8]]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut bits = Vec::with_capacity(width * height);
        for r in rows {
            if r.len() != width {
                return Err(Error::DimensionMismatch("ragged mask rows".into()));
            }
            bits.extend(r.iter().map(|&b| b != 0));
        }
        Self::from_bits(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_stored(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn set(&mut self, index: usize, stored: bool) {
        self.bits[index] = stored;
    }

    pub fn stored_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn interior_count(&self) -> usize {
        self.len() - self.stored_count()
    }

    pub fn density(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.stored_count() as f64 / self.len() as f64
    }

    pub fn has_stored(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    /// Row-major indices of the stored pixels.
    pub fn stored_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.bits[i]).collect()
    }

    pub(crate) fn check_shape(&self, shape: Shape) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::DimensionMismatch(format!(
                "mask is {}x{}, field is {}x{}",
                self.width, self.height, shape.width, shape.height
            )));
        }
        Ok(())
    }
}
