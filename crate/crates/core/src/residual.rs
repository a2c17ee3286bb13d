//! Patch-wise coding of the (quantized) residual layer.
//!
//! Every patch is an independent range-coded segment. Inside a patch the
//! encoder derives each pixel's mixture parameters group by group along the
//! wavefront schedule, reading context only from pixels of earlier groups.
//! Symbols are then emitted in raster order with channels innermost, which
//! is also the order the decoder reconstructs them in. Because a pixel's
//! PMF depends only on its masked context, the bitstream does not depend on
//! which schedule the encoder used.

use rayon::prelude::*;

use crate::coder::{build_cdf, QuantizedCdf, RangeDecoder, RangeEncoder};
use crate::error::{Error, Result};
use crate::image::ResidualGrid;
use crate::model::{
    discrete_pmf, estimate_params, LogisticMixtureParams, ParamTensor, SymbolSupport,
};
use crate::schedule::{tile, ContextModelSpec, Patch, Schedule};

/// Decoded residuals of one patch and which pixels are already known.
#[derive(Debug, Clone)]
pub struct PatchContext {
    patch: Patch,
    channels: usize,
    values: Vec<i32>,
    known: Vec<bool>,
}

impl PatchContext {
    fn new(patch: Patch, channels: usize) -> Self {
        Self {
            patch,
            channels,
            values: vec![0; patch.height * patch.width * channels],
            known: vec![false; patch.height * patch.width],
        }
    }

    pub fn patch(&self) -> Patch {
        self.patch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn store(&mut self, row: usize, col: usize, pixel: &[i32]) {
        let i = row * self.patch.width + col;
        self.values[i * self.channels..(i + 1) * self.channels].copy_from_slice(pixel);
        self.known[i] = true;
    }

    /// Residual at patch-local `(row, col)`.
    ///
    /// Panics when the pixel has not been coded yet: a non-causal read is a
    /// decodability bug, never a recoverable condition.
    pub fn get(&self, row: usize, col: usize, ch: usize) -> i32 {
        let i = row * self.patch.width + col;
        assert!(self.known[i], "non-causal context read at ({row}, {col})");
        self.values[i * self.channels + ch]
    }

    /// Context residuals of `channel` at `offsets` around `(row, col)`;
    /// positions outside the patch are skipped.
    pub fn gather(
        &self,
        row: usize,
        col: usize,
        ch: usize,
        offsets: &[(i32, i32)],
        out: &mut Vec<i32>,
    ) {
        out.clear();
        for &(dr, dc) in offsets {
            let r = row as i64 + i64::from(dr);
            let c = col as i64 + i64::from(dc);
            if r >= 0
                && c >= 0
                && (r as usize) < self.patch.height
                && (c as usize) < self.patch.width
            {
                out.push(self.get(r as usize, c as usize, ch));
            }
        }
    }
}

/// Deterministic source of per-pixel mixture parameters. Implementations
/// may only look at the causal context they are handed.
pub trait ParamProvider: Sync {
    /// Mixture count this provider produces.
    fn mixtures(&self) -> usize;

    fn pixel_params(&self, ctx: &PatchContext, row: usize, col: usize) -> LogisticMixtureParams;
}

/// The built-in `K = 1` estimator over the masked context.
#[derive(Debug, Clone)]
pub struct EstimatorProvider {
    offsets: Vec<(i32, i32)>,
}

impl EstimatorProvider {
    pub fn new(spec: ContextModelSpec) -> Self {
        Self {
            offsets: spec.context_offsets(),
        }
    }
}

impl ParamProvider for EstimatorProvider {
    fn mixtures(&self) -> usize {
        1
    }

    fn pixel_params(&self, ctx: &PatchContext, row: usize, col: usize) -> LogisticMixtureParams {
        let mut lists = vec![Vec::with_capacity(self.offsets.len()); ctx.channels()];
        for (ch, list) in lists.iter_mut().enumerate() {
            ctx.gather(row, col, ch, &self.offsets, list);
        }
        let views: Vec<&[i32]> = lists.iter().map(Vec::as_slice).collect();
        estimate_params(&views)
    }
}

/// Parameters read from an externally produced tensor.
#[derive(Debug, Clone, Copy)]
pub struct TensorProvider<'a> {
    tensor: &'a ParamTensor,
}

impl<'a> TensorProvider<'a> {
    pub fn new(tensor: &'a ParamTensor) -> Self {
        Self { tensor }
    }
}

impl ParamProvider for TensorProvider<'_> {
    fn mixtures(&self) -> usize {
        self.tensor.mixtures()
    }

    fn pixel_params(&self, ctx: &PatchContext, row: usize, col: usize) -> LogisticMixtureParams {
        let p = ctx.patch();
        self.tensor.pixel(p.row + row, p.col + col).clone()
    }
}

/// Which order the encoder derives parameters in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScheduleKind {
    #[default]
    Wavefront,
    Raster,
}

/// Shared settings of the residual layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerConfig {
    /// Symbols the range coder may emit, stride `2τ+1`.
    pub support: SymbolSupport,
    pub patch_size: usize,
    pub context: ContextModelSpec,
}

/// CDF of one subpixel given its pixel parameters and the already coded
/// channels of the same pixel.
pub fn subpixel_cdf(
    params: &LogisticMixtureParams,
    channel: usize,
    previous: &[i32],
    support: SymbolSupport,
) -> Result<QuantizedCdf> {
    let mixture = params.channel_mixture(channel, previous)?;
    build_cdf(&discrete_pmf(&mixture, support)?, support)
}

/// Codes a quantized residual grid into one segment per patch.
pub fn encode_layer(
    residuals: &ResidualGrid,
    cfg: &LayerConfig,
    provider: &dyn ParamProvider,
    kind: ScheduleKind,
) -> Result<Vec<Vec<u8>>> {
    let (h, w, _) = residuals.shape();
    tile(h, w, cfg.patch_size)
        .into_par_iter()
        .map(|patch| encode_patch(residuals, patch, cfg, provider, kind))
        .collect()
}

fn encode_patch(
    residuals: &ResidualGrid,
    patch: Patch,
    cfg: &LayerConfig,
    provider: &dyn ParamProvider,
    kind: ScheduleKind,
) -> Result<Vec<u8>> {
    let channels = residuals.channels();
    let (ph, pw) = (patch.height as u32, patch.width as u32);
    let schedule = match kind {
        ScheduleKind::Wavefront => Schedule::wavefront(ph, pw, cfg.context),
        ScheduleKind::Raster => Schedule::raster(ph, pw),
    };
    let pixel = |row: usize, col: usize| -> Vec<i32> {
        (0..channels)
            .map(|ch| residuals.get(patch.row + row, patch.col + col, ch))
            .collect()
    };

    // derive parameters group by group; a group only sees earlier groups
    let mut ctx = PatchContext::new(patch, channels);
    let mut params: Vec<Option<LogisticMixtureParams>> = vec![None; patch.height * patch.width];
    for group in schedule.groups() {
        let derived: Vec<_> = group
            .par_iter()
            .map(|&(r, c)| provider.pixel_params(&ctx, r as usize, c as usize))
            .collect();
        for (&(r, c), p) in group.iter().zip(derived) {
            let (r, c) = (r as usize, c as usize);
            params[r * patch.width + c] = Some(p);
            ctx.store(r, c, &pixel(r, c));
        }
    }

    let mut enc = RangeEncoder::new();
    for row in 0..patch.height {
        let cdfs = (0..patch.width)
            .into_par_iter()
            .map(|col| {
                let p = params[row * patch.width + col]
                    .as_ref()
                    .expect("schedule covers every pixel");
                let values = pixel(row, col);
                (0..channels)
                    .map(|ch| subpixel_cdf(p, ch, &values[..ch], cfg.support))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for (col, pixel_cdfs) in cdfs.iter().enumerate() {
            for (ch, cdf) in pixel_cdfs.iter().enumerate() {
                enc.encode_symbol(cdf, residuals.get(patch.row + row, patch.col + col, ch))?;
            }
        }
    }
    Ok(enc.finish())
}

/// Inverse of [`encode_layer`]. Segments are decoded concurrently.
pub fn decode_layer(
    segments: &[&[u8]],
    shape: (usize, usize, usize),
    cfg: &LayerConfig,
    provider: &dyn ParamProvider,
) -> Result<ResidualGrid> {
    let (h, w, channels) = shape;
    let patches = tile(h, w, cfg.patch_size);
    if patches.len() != segments.len() {
        return Err(Error::InvalidContainer("patch count mismatch"));
    }
    let decoded = patches
        .par_iter()
        .zip(segments.par_iter())
        .map(|(&patch, bytes)| decode_patch(bytes, patch, channels, cfg, provider))
        .collect::<Result<Vec<_>>>()?;
    let mut grid = ResidualGrid::zeros(h, w, channels)?;
    for (patch, ctx) in patches.iter().zip(&decoded) {
        for row in 0..patch.height {
            for col in 0..patch.width {
                for ch in 0..channels {
                    grid.set(patch.row + row, patch.col + col, ch, ctx.get(row, col, ch));
                }
            }
        }
    }
    Ok(grid)
}

fn decode_patch(
    bytes: &[u8],
    patch: Patch,
    channels: usize,
    cfg: &LayerConfig,
    provider: &dyn ParamProvider,
) -> Result<PatchContext> {
    let mut dec = RangeDecoder::new(bytes)?;
    let mut ctx = PatchContext::new(patch, channels);
    let mut values = Vec::with_capacity(channels);
    for row in 0..patch.height {
        for col in 0..patch.width {
            let params = provider.pixel_params(&ctx, row, col);
            values.clear();
            for ch in 0..channels {
                let cdf = subpixel_cdf(&params, ch, &values, cfg.support)?;
                values.push(dec.decode_symbol(&cdf)?);
            }
            ctx.store(row, col, &values);
        }
    }
    dec.finish()?;
    Ok(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::{quantize_residual, Tau};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy_grid(h: usize, w: usize, c: usize, seed: u64) -> ResidualGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (0..h * w * c).map(|_| rng.gen_range(-20..=20)).collect();
        ResidualGrid::new(h, w, c, s).unwrap()
    }

    fn config(
        grid: &ResidualGrid,
        tau: Tau,
        patch_size: usize,
        spec: ContextModelSpec,
    ) -> LayerConfig {
        let (lo, hi) = grid.min_max();
        LayerConfig {
            support: SymbolSupport::new(lo, hi, tau.step()).unwrap(),
            patch_size,
            context: spec,
        }
    }

    #[test]
    fn layer_round_trip() {
        for (h, w, c, p) in [(1, 1, 1, 4), (5, 9, 3, 4), (17, 8, 1, 8), (20, 20, 3, 64)] {
            let grid = noisy_grid(h, w, c, (h * w) as u64);
            let spec = ContextModelSpec::new(5, 2).unwrap();
            let cfg = config(&grid, Tau::LOSSLESS, p, spec);
            let provider = EstimatorProvider::new(spec);
            let segments = encode_layer(&grid, &cfg, &provider, ScheduleKind::Wavefront).unwrap();
            let views: Vec<&[u8]> = segments.iter().map(Vec::as_slice).collect();
            let back = decode_layer(&views, grid.shape(), &cfg, &provider).unwrap();
            assert_eq!(back, grid);
        }
    }

    #[test]
    fn quantized_layer_round_trip() {
        let tau = Tau::new(2).unwrap();
        let grid = noisy_grid(12, 10, 3, 3)
            .map(|r| quantize_residual(r, tau))
            .unwrap();
        let spec = ContextModelSpec::default();
        let cfg = config(&grid, tau, 8, spec);
        let provider = EstimatorProvider::new(spec);
        let segments = encode_layer(&grid, &cfg, &provider, ScheduleKind::Wavefront).unwrap();
        let views: Vec<&[u8]> = segments.iter().map(Vec::as_slice).collect();
        assert_eq!(
            decode_layer(&views, grid.shape(), &cfg, &provider).unwrap(),
            grid
        );
    }

    #[test]
    fn schedule_choice_does_not_change_bytes() {
        let grid = noisy_grid(16, 16, 3, 21);
        for j in 1..=5 {
            let spec = ContextModelSpec::new(7, j).unwrap();
            let cfg = config(&grid, Tau::LOSSLESS, 16, spec);
            let provider = EstimatorProvider::new(spec);
            let a = encode_layer(&grid, &cfg, &provider, ScheduleKind::Wavefront).unwrap();
            let b = encode_layer(&grid, &cfg, &provider, ScheduleKind::Raster).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    #[should_panic(expected = "non-causal context read")]
    fn reading_ahead_panics() {
        let patch = Patch {
            row: 0,
            col: 0,
            height: 2,
            width: 2,
        };
        let ctx = PatchContext::new(patch, 1);
        ctx.get(1, 1, 0);
    }

    #[test]
    fn truncated_segment_fails() {
        let grid = noisy_grid(8, 8, 1, 4);
        let spec = ContextModelSpec::default();
        let cfg = config(&grid, Tau::LOSSLESS, 64, spec);
        let provider = EstimatorProvider::new(spec);
        let segments = encode_layer(&grid, &cfg, &provider, ScheduleKind::Wavefront).unwrap();
        let short = &segments[0][..segments[0].len() - 3];
        assert!(decode_layer(&[short], grid.shape(), &cfg, &provider).is_err());
    }
}
