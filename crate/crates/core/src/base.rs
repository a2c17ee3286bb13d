//! Lossy base layer: produces a payload and the reconstruction `x̃` that the
//! residual layer is computed against.
//!
//! Two deterministic codecs are built in. `Null` sends nothing and predicts
//! an all-zero image, so the residual is the image itself. `Downsample`
//! stores a box-filtered `1/f` image and upsamples it bilinearly in fixed
//! point, so encoder and decoder reconstruct bit-identical planes.

use crate::error::{Error, Result};
use crate::image::ImagePlane;

pub const NULL_CODEC_ID: u8 = 0;
pub const DOWNSAMPLE_CODEC_ID: u8 = 1;
/// Ids from here on are reserved for externally supplied codecs.
pub const FIRST_USER_CODEC_ID: u8 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseCodecConfig {
    Null,
    Downsample { factor: u8 },
}

impl BaseCodecConfig {
    pub fn downsample(factor: u8) -> Result<Self> {
        if matches!(factor, 2 | 4 | 8) {
            Ok(Self::Downsample { factor })
        } else {
            Err(Error::InvalidFactor(factor))
        }
    }

    /// Parses the `(codec_id, factor)` pair stored in a container header.
    pub fn from_header(codec_id: u8, factor: u8) -> Result<Self> {
        match codec_id {
            NULL_CODEC_ID if factor == 0 => Ok(Self::Null),
            NULL_CODEC_ID => Err(Error::InvalidFactor(factor)),
            DOWNSAMPLE_CODEC_ID => Self::downsample(factor),
            other => Err(Error::UnknownCodec(other)),
        }
    }

    pub fn codec_id(&self) -> u8 {
        match self {
            Self::Null => NULL_CODEC_ID,
            Self::Downsample { .. } => DOWNSAMPLE_CODEC_ID,
        }
    }

    /// Factor byte stored in the header, zero for the null codec.
    pub fn factor(&self) -> u8 {
        match self {
            Self::Null => 0,
            Self::Downsample { factor } => *factor,
        }
    }
}

/// A lossy codec usable as the base layer.
pub trait BaseCodec {
    fn encode(&self, image: &ImagePlane) -> Result<(Vec<u8>, ImagePlane)>;
    fn decode(&self, payload: &[u8], shape: (usize, usize, usize)) -> Result<ImagePlane>;
}

impl BaseCodec for BaseCodecConfig {
    fn encode(&self, image: &ImagePlane) -> Result<(Vec<u8>, ImagePlane)> {
        base_encode(image, *self)
    }

    fn decode(&self, payload: &[u8], shape: (usize, usize, usize)) -> Result<ImagePlane> {
        base_decode(payload, *self, shape)
    }
}

pub fn base_encode(image: &ImagePlane, cfg: BaseCodecConfig) -> Result<(Vec<u8>, ImagePlane)> {
    match cfg {
        BaseCodecConfig::Null => {
            let (h, w, c) = image.shape();
            Ok((Vec::new(), ImagePlane::filled(h, w, c, 0)?))
        }
        BaseCodecConfig::Downsample { factor } => {
            let small = box_downsample(image, factor.into())?;
            let lossy = bilinear_upsample(&small, factor.into(), image.height(), image.width())?;
            Ok((small.into_samples(), lossy))
        }
    }
}

pub fn base_decode(
    payload: &[u8],
    cfg: BaseCodecConfig,
    shape: (usize, usize, usize),
) -> Result<ImagePlane> {
    let (h, w, c) = shape;
    match cfg {
        BaseCodecConfig::Null => {
            if !payload.is_empty() {
                return Err(Error::PayloadLength {
                    expected: 0,
                    found: payload.len(),
                });
            }
            ImagePlane::filled(h, w, c, 0)
        }
        BaseCodecConfig::Downsample { factor } => {
            let f = usize::from(factor);
            let (sh, sw) = (h.div_ceil(f), w.div_ceil(f));
            let expected = sh * sw * c;
            if payload.len() != expected {
                return Err(Error::PayloadLength {
                    expected,
                    found: payload.len(),
                });
            }
            let small = ImagePlane::new(sh, sw, c, payload.to_vec())?;
            bilinear_upsample(&small, f, h, w)
        }
    }
}

/// Rounded mean of each `f×f` block; blocks hanging over the edge repeat
/// the last row or column.
pub fn box_downsample(image: &ImagePlane, factor: usize) -> Result<ImagePlane> {
    let (h, w, c) = image.shape();
    let (sh, sw) = (h.div_ceil(factor), w.div_ceil(factor));
    let area = (factor * factor) as u32;
    let mut out = Vec::with_capacity(sh * sw * c);
    for by in 0..sh {
        for bx in 0..sw {
            for ch in 0..c {
                let mut sum = 0u32;
                for dy in 0..factor {
                    let y = (by * factor + dy).min(h - 1);
                    for dx in 0..factor {
                        let x = (bx * factor + dx).min(w - 1);
                        sum += u32::from(image.get(y, x, ch));
                    }
                }
                out.push(((sum + area / 2) / area) as u8);
            }
        }
    }
    ImagePlane::new(sh, sw, c, out)
}

/// Position of full-resolution pixel `y` in low-resolution sample units,
/// with 8 fractional bits. Low-resolution sample `i` sits at the centre of
/// its block, `i·f + (f-1)/2`.
fn source_position(y: usize, factor: usize) -> i64 {
    (2 * y as i64 - factor as i64 + 1) * 128 / factor as i64
}

/// Splits a fixed-point position into clamped neighbour indices and the
/// weight of the second one.
fn taps(pos: i64, len: usize) -> (usize, usize, u32) {
    let base = pos >> 8;
    let frac = (pos & 0xFF) as u32;
    let clamp = |i: i64| i.clamp(0, len as i64 - 1) as usize;
    (clamp(base), clamp(base + 1), frac)
}

/// Bilinear upsampling with 8-bit fractional weights per axis, a single
/// round-half-up at the end and replicated borders.
pub fn bilinear_upsample(
    small: &ImagePlane,
    factor: usize,
    height: usize,
    width: usize,
) -> Result<ImagePlane> {
    let (sh, sw, c) = small.shape();
    let cols: Vec<_> = (0..width)
        .map(|x| taps(source_position(x, factor), sw))
        .collect();
    let mut out = Vec::with_capacity(height * width * c);
    for y in 0..height {
        let (y0, y1, fy) = taps(source_position(y, factor), sh);
        for &(x0, x1, fx) in &cols {
            for ch in 0..c {
                let top = u32::from(small.get(y0, x0, ch)) * (256 - fx)
                    + u32::from(small.get(y0, x1, ch)) * fx;
                let bottom = u32::from(small.get(y1, x0, ch)) * (256 - fx)
                    + u32::from(small.get(y1, x1, ch)) * fx;
                let acc = top * (256 - fy) + bottom * fy;
                out.push(((acc + (1 << 15)) >> 16) as u8);
            }
        }
    }
    ImagePlane::new(height, width, c, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::compute_residual;
    use proptest::prelude::*;

    fn ramp(h: usize, w: usize) -> ImagePlane {
        let s = (0..h * w).map(|i| (i * 13 % 256) as u8).collect();
        ImagePlane::new(h, w, 1, s).unwrap()
    }

    #[test]
    fn null_base_predicts_zero() {
        let x = ramp(3, 5);
        let (payload, lossy) = base_encode(&x, BaseCodecConfig::Null).unwrap();
        assert!(payload.is_empty());
        assert!(lossy.samples().iter().all(|&v| v == 0));
        assert_eq!(
            compute_residual(&x, &lossy).unwrap().get(2, 4, 0),
            x.get(2, 4, 0) as i32
        );
        assert_eq!(
            base_decode(&[], BaseCodecConfig::Null, (3, 5, 1)).unwrap(),
            lossy
        );
    }

    #[test]
    fn constant_image_survives_downsampling() {
        let x = ImagePlane::filled(7, 9, 3, 77).unwrap();
        for f in [2, 4, 8] {
            let (_, lossy) = base_encode(&x, BaseCodecConfig::downsample(f).unwrap()).unwrap();
            assert_eq!(lossy, x);
        }
    }

    /// Floating-point reference with explicit sample centres.
    fn reference_upsample(
        small: &[f64],
        sh: usize,
        sw: usize,
        f: usize,
        h: usize,
        w: usize,
    ) -> Vec<u8> {
        let coord = |y: usize| (y as f64 - (f as f64 - 1.0) / 2.0) / f as f64;
        let mut out = Vec::new();
        for y in 0..h {
            let sy = coord(y);
            let (y0, wy) = (sy.floor(), sy - sy.floor());
            for x in 0..w {
                let sx = coord(x);
                let (x0, wx) = (sx.floor(), sx - sx.floor());
                let at = |r: f64, c: f64| {
                    let r = r.clamp(0.0, sh as f64 - 1.0) as usize;
                    let c = c.clamp(0.0, sw as f64 - 1.0) as usize;
                    small[r * sw + c]
                };
                let v = (1.0 - wy) * ((1.0 - wx) * at(y0, x0) + wx * at(y0, x0 + 1.0))
                    + wy * ((1.0 - wx) * at(y0 + 1.0, x0) + wx * at(y0 + 1.0, x0 + 1.0));
                out.push((v + 0.5).floor() as u8);
            }
        }
        out
    }

    #[test]
    fn ramp_matches_reference() {
        let x = ImagePlane::new(4, 4, 1, (0..16).map(|i| i * 16).collect()).unwrap();
        let (payload, lossy) = base_encode(&x, BaseCodecConfig::downsample(2).unwrap()).unwrap();
        // block means of the 4x4 ramp, rounded half up
        let means: Vec<f64> = [[0, 1, 4, 5], [2, 3, 6, 7], [8, 9, 12, 13], [10, 11, 14, 15]]
            .iter()
            .map(|b| ((b.iter().map(|i| i * 16).sum::<u32>() as f64) / 4.0 + 0.5).floor())
            .collect();
        assert_eq!(payload, means.iter().map(|&m| m as u8).collect::<Vec<_>>());
        assert_eq!(lossy.samples(), reference_upsample(&means, 2, 2, 2, 4, 4));
    }

    #[test]
    fn payload_length_checks() {
        let cfg = BaseCodecConfig::downsample(4).unwrap();
        let x = ramp(9, 5);
        let (payload, lossy) = base_encode(&x, cfg).unwrap();
        assert_eq!(payload.len(), 3 * 2);
        assert_eq!(base_decode(&payload, cfg, (9, 5, 1)).unwrap(), lossy);
        assert_eq!(
            base_decode(&payload[1..], cfg, (9, 5, 1)),
            Err(Error::PayloadLength {
                expected: 6,
                found: 5
            })
        );
        assert!(base_decode(&[1], BaseCodecConfig::Null, (1, 1, 1)).is_err());
    }

    #[test]
    fn header_ids() {
        assert_eq!(
            BaseCodecConfig::from_header(0, 0).unwrap(),
            BaseCodecConfig::Null
        );
        assert_eq!(
            BaseCodecConfig::from_header(1, 8).unwrap(),
            BaseCodecConfig::Downsample { factor: 8 }
        );
        assert_eq!(
            BaseCodecConfig::from_header(1, 3),
            Err(Error::InvalidFactor(3))
        );
        assert_eq!(
            BaseCodecConfig::from_header(200, 0),
            Err(Error::UnknownCodec(200))
        );
        assert_eq!(
            BaseCodecConfig::from_header(7, 0),
            Err(Error::UnknownCodec(7))
        );
    }

    proptest! {
        #[test]
        fn upsample_matches_reference(
            (h, w, s) in (1usize..20, 1usize..20)
                .prop_flat_map(|(h, w)| (Just(h), Just(w), proptest::collection::vec(any::<u8>(), h * w))),
            f in prop::sample::select(vec![2usize, 4, 8]),
        ) {
            let x = ImagePlane::new(h, w, 1, s).unwrap();
            let cfg = BaseCodecConfig::downsample(f as u8).unwrap();
            let (payload, lossy) = base_encode(&x, cfg).unwrap();
            let (sh, sw) = (h.div_ceil(f), w.div_ceil(f));
            prop_assert_eq!(payload.len(), sh * sw);
            let small: Vec<f64> = payload.iter().map(|&v| v as f64).collect();
            prop_assert_eq!(lossy.samples(), &reference_upsample(&small, sh, sw, f, h, w)[..]);
            prop_assert_eq!(base_decode(&payload, cfg, (h, w, 1)).unwrap(), lossy);
        }
    }
}
