//! The `LPR1` file format and the end-to-end encode/decode pipeline.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "LPR1"
//!      4     1  version (1)
//!      5     4  height
//!      9     4  width
//!     13     1  channels (1 or 3)
//!     14     1  tau
//!     15     1  base codec id
//!     16     1  base factor (0 for the null codec)
//!     17     2  patch size P
//!     19     1  kernel size k
//!     20     1  parallelism index j
//!     21     1  mixture count K
//!     22     1  parameter source (0 estimator, 1 tensor)
//!     23     2  lowest coded residual, i16
//!     25     2  highest coded residual, i16
//!     27     4  base payload length
//!     31   4·N  residual segment length per patch, patches in raster order
//!               base payload, then the N residual segments
//!     end-4  4  CRC-32 of the reconstructed samples
//! ```

use crate::base::{base_decode, base_encode, BaseCodecConfig};
use crate::coder::ResidualInterval;
use crate::error::{Error, Result};
use crate::image::{compute_residual, reconstruct, ImagePlane, ResidualGrid};
use crate::model::ParamTensor;
use crate::quant::{quantize_residual, Tau};
use crate::residual::{
    decode_layer, encode_layer, EstimatorProvider, LayerConfig, ParamProvider, ScheduleKind,
    TensorProvider,
};
use crate::schedule::ContextModelSpec;

pub const MAGIC: &[u8; 4] = b"LPR1";
pub const VERSION: u8 = 1;
/// Size of the fixed part of the header, before the segment length table.
pub const FIXED_HEADER_LEN: usize = 31;
const CHECKSUM_LEN: usize = 4;
/// Largest `H·W·C` a decoder accepts.
pub const MAX_SAMPLES: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParamSource {
    #[default]
    Estimator,
    Tensor,
}

impl ParamSource {
    fn to_byte(self) -> u8 {
        match self {
            Self::Estimator => 0,
            Self::Tensor => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Self::Estimator),
            1 => Ok(Self::Tensor),
            _ => Err(Error::InvalidContainer("unknown parameter source")),
        }
    }
}

/// How the residual symbol range is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntervalMode {
    /// Only the range actually observed in the image.
    #[default]
    Adaptive,
    /// All of `[-255, 255]`.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeConfig {
    pub tau: Tau,
    pub base: BaseCodecConfig,
    pub patch_size: u16,
    pub context: ContextModelSpec,
    pub interval: IntervalMode,
    pub schedule: ScheduleKind,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            tau: Tau::LOSSLESS,
            base: BaseCodecConfig::Null,
            patch_size: 64,
            context: ContextModelSpec::default(),
            interval: IntervalMode::Adaptive,
            schedule: ScheduleKind::Wavefront,
        }
    }
}

impl EncodeConfig {
    /// Defaults for a given bound: no base layer when lossless, a 4x
    /// downsampled base otherwise.
    pub fn for_tau(tau: Tau) -> Self {
        let base = if tau.is_lossless() {
            BaseCodecConfig::Null
        } else {
            BaseCodecConfig::Downsample { factor: 4 }
        };
        Self {
            tau,
            base,
            ..Self::default()
        }
    }
}

/// Parsed container header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub version: u8,
    pub height: u32,
    pub width: u32,
    pub channels: u8,
    pub tau: Tau,
    pub base: BaseCodecConfig,
    pub patch_size: u16,
    pub context: ContextModelSpec,
    pub mixtures: u8,
    pub source: ParamSource,
    pub interval: ResidualInterval,
    pub base_len: u32,
    pub segment_lens: Vec<u32>,
}

impl Header {
    pub fn shape(&self) -> (usize, usize, usize) {
        (
            self.height as usize,
            self.width as usize,
            self.channels as usize,
        )
    }

    /// Bytes before the base payload.
    pub fn encoded_len(&self) -> usize {
        FIXED_HEADER_LEN + 4 * self.segment_lens.len()
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.push(self.version);
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.push(self.channels);
        out.push(self.tau.get());
        out.push(self.base.codec_id());
        out.push(self.base.factor());
        out.extend_from_slice(&self.patch_size.to_le_bytes());
        out.push(self.context.kernel() as u8);
        out.push(self.context.parallelism() as u8);
        out.push(self.mixtures);
        out.push(self.source.to_byte());
        out.extend_from_slice(&(self.interval.min as i16).to_le_bytes());
        out.extend_from_slice(&(self.interval.max as i16).to_le_bytes());
        out.extend_from_slice(&self.base_len.to_le_bytes());
        for len in &self.segment_lens {
            out.extend_from_slice(&len.to_le_bytes());
        }
    }

    /// Parses and validates the header at the start of `bytes`.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 5 {
            return Err(Error::Truncated {
                expected: FIXED_HEADER_LEN,
                found: bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes[4] != VERSION {
            return Err(Error::UnsupportedVersion(bytes[4]));
        }
        if bytes.len() < FIXED_HEADER_LEN {
            return Err(Error::Truncated {
                expected: FIXED_HEADER_LEN,
                found: bytes.len(),
            });
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let height = u32_at(5);
        let width = u32_at(9);
        let channels = bytes[13];
        if height == 0 || width == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::InvalidContainer("bad image shape"));
        }
        let tau = Tau::new(bytes[14].into())?;
        let base = BaseCodecConfig::from_header(bytes[15], bytes[16])?;
        let patch_size = u16_at(17);
        let context = ContextModelSpec::new(bytes[19].into(), bytes[20].into())?;
        if u32::from(patch_size) < context.min_patch() {
            return Err(Error::PatchTooSmall {
                patch: patch_size.into(),
                k: context.kernel(),
            });
        }
        let mixtures = bytes[21];
        let source = ParamSource::from_byte(bytes[22])?;
        if mixtures == 0 || (source == ParamSource::Estimator && mixtures != 1) {
            return Err(Error::InvalidContainer("bad mixture count"));
        }
        let interval = ResidualInterval {
            min: i16::from_le_bytes([bytes[23], bytes[24]]).into(),
            max: i16::from_le_bytes([bytes[25], bytes[26]]).into(),
        };
        let full = ResidualInterval::full(tau);
        if interval.min > interval.max
            || interval.min < full.min
            || interval.max > full.max
            || interval.support(tau).is_err()
            || interval.min % tau.step() != 0
        {
            return Err(Error::InvalidContainer("bad residual interval"));
        }
        let base_len = u32_at(27);
        let (h, w, p) = (u64::from(height), u64::from(width), u64::from(patch_size));
        if h * w * u64::from(channels) > MAX_SAMPLES {
            return Err(Error::InvalidContainer("image too large"));
        }
        // checked against the file size before anything is allocated
        let patches = (h.div_ceil(p) * w.div_ceil(p)) as usize;
        let table_end = FIXED_HEADER_LEN + 4 * patches;
        if bytes.len() < table_end {
            return Err(Error::Truncated {
                expected: table_end,
                found: bytes.len(),
            });
        }
        let segment_lens = (0..patches)
            .map(|i| u32_at(FIXED_HEADER_LEN + 4 * i))
            .collect();
        Ok(Self {
            version: VERSION,
            height,
            width,
            channels,
            tau,
            base,
            patch_size,
            context,
            mixtures,
            source,
            interval,
            base_len,
            segment_lens,
        })
    }

    /// Total container size implied by the header.
    pub fn file_len(&self) -> usize {
        self.encoded_len()
            + self.base_len as usize
            + self.segment_lens.iter().map(|&l| l as usize).sum::<usize>()
            + CHECKSUM_LEN
    }
}

/// Encoder-side intermediate state: everything derived from the image
/// before entropy coding. `residuals` holds the unquantized residuals and
/// is never consulted when the container is written.
#[derive(Debug, Clone)]
pub struct PreparedImage {
    pub config: EncodeConfig,
    pub base_payload: Vec<u8>,
    pub lossy: ImagePlane,
    pub residuals: ResidualGrid,
    pub quantized: ResidualGrid,
}

/// Runs the base layer and residual quantization.
pub fn prepare(image: &ImagePlane, config: &EncodeConfig) -> Result<PreparedImage> {
    if u32::from(config.patch_size) < config.context.min_patch() {
        return Err(Error::PatchTooSmall {
            patch: config.patch_size.into(),
            k: config.context.kernel(),
        });
    }
    let (base_payload, lossy) = base_encode(image, config.base)?;
    let residuals = compute_residual(image, &lossy)?;
    let quantized = residuals.map(|r| quantize_residual(r, config.tau))?;
    Ok(PreparedImage {
        config: *config,
        base_payload,
        lossy,
        residuals,
        quantized,
    })
}

fn check_tensor(tensor: &ParamTensor, shape: (usize, usize, usize)) -> Result<()> {
    let (h, w, c) = shape;
    if (tensor.height(), tensor.width(), tensor.channels()) != (h, w, c) {
        return Err(Error::Tensor(format!(
            "tensor shape {}x{}x{} does not match image {h}x{w}x{c}",
            tensor.height(),
            tensor.width(),
            tensor.channels()
        )));
    }
    Ok(())
}

/// Entropy codes a prepared image and assembles the container.
pub fn write_container(prepared: &PreparedImage, tensor: Option<&ParamTensor>) -> Result<Vec<u8>> {
    let cfg = &prepared.config;
    let quantized = &prepared.quantized;
    let shape = quantized.shape();
    let interval = match cfg.interval {
        IntervalMode::Adaptive => ResidualInterval::of(quantized, cfg.tau),
        IntervalMode::Full => ResidualInterval::full(cfg.tau),
    };
    let layer = LayerConfig {
        support: interval.support(cfg.tau)?,
        patch_size: cfg.patch_size.into(),
        context: cfg.context,
    };
    let estimator;
    let tensor_provider;
    let (provider, source, mixtures): (&dyn ParamProvider, _, _) = match tensor {
        Some(t) => {
            check_tensor(t, shape)?;
            tensor_provider = TensorProvider::new(t);
            (&tensor_provider, ParamSource::Tensor, t.mixtures())
        }
        None => {
            estimator = EstimatorProvider::new(cfg.context);
            (&estimator, ParamSource::Estimator, 1)
        }
    };
    let segments = encode_layer(quantized, &layer, provider, cfg.schedule)?;
    let reconstruction = reconstruct(&prepared.lossy, quantized)?;

    let len32 =
        |n: usize| u32::try_from(n).map_err(|_| Error::InvalidContainer("section too large"));
    let header = Header {
        version: VERSION,
        height: len32(shape.0)?,
        width: len32(shape.1)?,
        channels: shape.2 as u8,
        tau: cfg.tau,
        base: cfg.base,
        patch_size: cfg.patch_size,
        context: cfg.context,
        mixtures: mixtures as u8,
        source,
        interval,
        base_len: len32(prepared.base_payload.len())?,
        segment_lens: segments
            .iter()
            .map(|s| len32(s.len()))
            .collect::<Result<_>>()?,
    };
    let mut out = Vec::with_capacity(header.file_len());
    header.write(&mut out);
    out.extend_from_slice(&prepared.base_payload);
    for s in &segments {
        out.extend_from_slice(s);
    }
    out.extend_from_slice(&crc32fast::hash(reconstruction.samples()).to_le_bytes());
    debug_assert_eq!(out.len(), header.file_len());
    Ok(out)
}

/// Encodes with the built-in parameter estimator.
pub fn encode_file(image: &ImagePlane, config: &EncodeConfig) -> Result<Vec<u8>> {
    encode_file_with(image, config, None)
}

/// Encodes, taking mixture parameters from `tensor` when given.
pub fn encode_file_with(
    image: &ImagePlane,
    config: &EncodeConfig,
    tensor: Option<&ParamTensor>,
) -> Result<Vec<u8>> {
    write_container(&prepare(image, config)?, tensor)
}

/// Decodes a container coded with the built-in estimator.
pub fn decode_file(bytes: &[u8]) -> Result<ImagePlane> {
    decode_file_with(bytes, None)
}

pub fn decode_file_with(bytes: &[u8], tensor: Option<&ParamTensor>) -> Result<ImagePlane> {
    let header = Header::parse(bytes)?;
    let expected = header.file_len();
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::InvalidContainer("trailing bytes after checksum"));
    }
    let shape = header.shape();

    let mut pos = header.encoded_len();
    let base_payload = &bytes[pos..pos + header.base_len as usize];
    pos += base_payload.len();
    let mut segments = Vec::with_capacity(header.segment_lens.len());
    for &len in &header.segment_lens {
        segments.push(&bytes[pos..pos + len as usize]);
        pos += len as usize;
    }
    let stored = u32::from_le_bytes(bytes[pos..pos + CHECKSUM_LEN].try_into().unwrap());

    let lossy = base_decode(base_payload, header.base, shape)?;
    let layer = LayerConfig {
        support: header.interval.support(header.tau)?,
        patch_size: header.patch_size.into(),
        context: header.context,
    };
    let residuals = match header.source {
        ParamSource::Estimator => {
            let provider = EstimatorProvider::new(header.context);
            decode_layer(&segments, shape, &layer, &provider)
        }
        ParamSource::Tensor => {
            let t = tensor.ok_or(Error::MissingTensor)?;
            check_tensor(t, shape)?;
            if t.mixtures() != usize::from(header.mixtures) {
                return Err(Error::Tensor("mixture count differs from header".into()));
            }
            decode_layer(&segments, shape, &layer, &TensorProvider::new(t))
        }
    };
    let residuals = residuals.map_err(|e| match e {
        Error::StreamExhausted | Error::InvalidContainer(_) => {
            Error::CorruptStream("residual segment does not decode cleanly")
        }
        other => other,
    })?;
    let image = reconstruct(&lossy, &residuals)?;
    let computed = crc32fast::hash(image.samples());
    if computed != stored {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    Ok(image)
}

/// Size breakdown of a container in bits per subpixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub tau: u8,
    pub total_bytes: usize,
    /// Fixed header plus base payload.
    pub base_bytes: usize,
    /// Segment length table, residual segments and checksum.
    pub residual_bytes: usize,
    pub bpsp_total: f64,
    pub bpsp_base: f64,
    pub bpsp_residual: f64,
}

pub fn stats(bytes: &[u8]) -> Result<RateReport> {
    let header = Header::parse(bytes)?;
    let expected = header.file_len();
    if bytes.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let (height, width, channels) = header.shape();
    let subpixels = (height * width * channels) as f64;
    let base_bytes = FIXED_HEADER_LEN + header.base_len as usize;
    let residual_bytes = bytes.len() - base_bytes;
    let bpsp = |n: usize| 8.0 * n as f64 / subpixels;
    Ok(RateReport {
        height,
        width,
        channels,
        tau: header.tau.get(),
        total_bytes: bytes.len(),
        base_bytes,
        residual_bytes,
        bpsp_total: bpsp(bytes.len()),
        bpsp_base: bpsp(base_bytes),
        bpsp_residual: bpsp(residual_bytes),
    })
}
