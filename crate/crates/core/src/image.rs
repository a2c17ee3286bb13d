//! Pixel and residual grids, residual formation and clamped reconstruction.
//!
//! Both grids store samples row-major with channels interleaved, so sample
//! `(row, col, ch)` lives at `(row * width + col) * channels + ch`.

use crate::error::{Error, Result};

/// Largest residual magnitude for 8-bit samples.
pub const MAX_RESIDUAL: i32 = 255;

/// Largest magnitude a quantized residual can take: the bin centre of
/// `±255` lies at most `τ <= 255` further out.
pub const MAX_BIN_CENTRE: i32 = 2 * MAX_RESIDUAL;

/// An 8-bit image with one (gray) or three (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePlane {
    height: usize,
    width: usize,
    channels: usize,
    samples: Vec<u8>,
}

impl ImagePlane {
    pub fn new(height: usize, width: usize, channels: usize, samples: Vec<u8>) -> Result<Self> {
        check_shape(height, width, channels)?;
        let expected = height * width * channels;
        if samples.len() != expected {
            return Err(Error::Truncated {
                expected,
                found: samples.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            samples,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Result<Self> {
        check_shape(height, width, channels)?;
        Ok(Self {
            height,
            width,
            channels,
            samples: vec![value; height * width * channels],
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Number of subpixels, `H * W * C`.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> u8 {
        self.samples[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: u8) {
        self.samples[(row * self.width + col) * self.channels + ch] = value;
    }
}

/// Signed residuals, same layout as [`ImagePlane`].
///
/// Residuals of 8-bit images lie in `[-255, 255]`; after quantization with a
/// large bound the outermost bin centres can exceed that, so the grid
/// accepts anything up to [`MAX_BIN_CENTRE`] in magnitude.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualGrid {
    height: usize,
    width: usize,
    channels: usize,
    samples: Vec<i16>,
}

impl ResidualGrid {
    pub fn new(height: usize, width: usize, channels: usize, samples: Vec<i16>) -> Result<Self> {
        check_shape(height, width, channels)?;
        let expected = height * width * channels;
        if samples.len() != expected {
            return Err(Error::Truncated {
                expected,
                found: samples.len(),
            });
        }
        if let Some(&bad) = samples
            .iter()
            .find(|v| i32::from(**v).abs() > MAX_BIN_CENTRE)
        {
            return Err(Error::ResidualOutOfRange(bad.into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            samples,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        check_shape(height, width, channels)?;
        Ok(Self {
            height,
            width,
            channels,
            samples: vec![0; height * width * channels],
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn samples(&self) -> &[i16] {
        &self.samples
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> i32 {
        self.samples[(row * self.width + col) * self.channels + ch].into()
    }

    /// Panics if `|value|` exceeds [`MAX_BIN_CENTRE`].
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: i32) {
        assert!(
            value.abs() <= MAX_BIN_CENTRE,
            "residual {value} out of range"
        );
        self.samples[(row * self.width + col) * self.channels + ch] = value as i16;
    }

    /// Applies `f` to every sample, e.g. residual quantization.
    pub fn map(&self, mut f: impl FnMut(i32) -> i32) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .map(|&v| {
                let out = f(v.into());
                if out.abs() > MAX_BIN_CENTRE {
                    Err(Error::ResidualOutOfRange(out))
                } else {
                    Ok(out as i16)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { samples, ..*self })
    }

    /// `(min, max)` over all samples.
    pub fn min_max(&self) -> (i32, i32) {
        let min = self.samples.iter().copied().min().unwrap_or(0);
        let max = self.samples.iter().copied().max().unwrap_or(0);
        (min.into(), max.into())
    }
}

fn check_shape(height: usize, width: usize, channels: usize) -> Result<()> {
    if height == 0 || width == 0 || !(channels == 1 || channels == 3) {
        return Err(Error::InvalidDimensions {
            height,
            width,
            channels,
        });
    }
    Ok(())
}

/// `r = x - x̃`, elementwise.
pub fn compute_residual(original: &ImagePlane, lossy: &ImagePlane) -> Result<ResidualGrid> {
    if original.shape() != lossy.shape() {
        return Err(Error::ShapeMismatch(original.shape(), lossy.shape()));
    }
    let samples = original
        .samples
        .iter()
        .zip(&lossy.samples)
        .map(|(&x, &y)| i16::from(x) - i16::from(y))
        .collect();
    Ok(ResidualGrid {
        height: original.height,
        width: original.width,
        channels: original.channels,
        samples,
    })
}

/// `x̂ = clamp(x̃ + r̂, 0, 255)`.
///
/// Clamping can only move a sample towards `[0, 255]`, where the original
/// lives, so it never increases the reconstruction error.
pub fn reconstruct(lossy: &ImagePlane, residual: &ResidualGrid) -> Result<ImagePlane> {
    if lossy.shape() != residual.shape() {
        return Err(Error::ShapeMismatch(lossy.shape(), residual.shape()));
    }
    let samples = lossy
        .samples
        .iter()
        .zip(&residual.samples)
        .map(|(&x, &r)| (i16::from(x) + r).clamp(0, 255) as u8)
        .collect();
    Ok(ImagePlane {
        height: lossy.height,
        width: lossy.width,
        channels: lossy.channels,
        samples,
    })
}

/// Largest absolute per-sample difference between two same-shaped images.
pub fn max_abs_error(a: &ImagePlane, b: &ImagePlane) -> Result<u8> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(a.shape(), b.shape()));
    }
    Ok(a.samples
        .iter()
        .zip(&b.samples)
        .map(|(&x, &y)| x.abs_diff(y))
        .max()
        .unwrap_or(0))
}
