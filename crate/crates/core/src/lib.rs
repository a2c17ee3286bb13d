//! Lossless and near-lossless image coding by lossy base plus residual.
//!
//! An image `x` is first coded by a lossy base codec giving `x̃`. The
//! residual `r = x - x̃` is quantized with bins of width `2τ+1`, which bounds
//! the per-sample error by `τ` (`τ = 0` is lossless), and range coded under a
//! discrete logistic mixture model whose parameters come from causal
//! context. Patches are coded independently and, inside a patch, pixels
//! are grouped into wavefronts that can be modelled in parallel.

pub mod base;
pub mod coder;
pub mod container;
pub mod error;
pub mod image;
pub mod model;
pub mod pnm;
pub mod quant;
pub mod residual;
pub mod schedule;

pub use base::{base_decode, base_encode, BaseCodec, BaseCodecConfig};
pub use coder::{
    build_cdf, decode_stream, encode_stream, residual_interval, QuantizedCdf, ResidualInterval,
};
pub use container::{
    decode_file, decode_file_with, encode_file, encode_file_with, stats, EncodeConfig, Header,
    IntervalMode, ParamSource, RateReport,
};
pub use error::{Error, Result};
pub use image::{compute_residual, max_abs_error, reconstruct, ImagePlane, ResidualGrid};
pub use model::{discrete_pmf, estimate_params, LogisticMixtureParams, ParamTensor, SymbolSupport};
pub use pnm::{load_image, save_image};
pub use quant::{bin_of, quantize_pmf, quantize_residual, Tau};
pub use residual::{ParamProvider, ScheduleKind};
pub use schedule::{
    build_schedule, context_offsets, tile, wavefront_step, ContextModelSpec, Schedule,
};
