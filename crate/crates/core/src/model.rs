//! Discrete logistic mixture model over residual symbols.
//!
//! Each pixel carries `K` logistic components shared across channels by
//! their weights; means and scales are per channel. Channels are coded in
//! order and later channels see earlier ones through linear mean updates.

use crate::error::{Error, Result};

/// Smallest admissible logistic scale.
pub const SIGMA_MIN: f64 = 1e-3;

/// Scale floor of the built-in estimator.
pub const ESTIMATOR_SIGMA_FLOOR: f64 = 1.0;

/// Tolerance on the mixture weights summing to one.
const WEIGHT_SUM_TOL: f64 = 1e-6;

/// An arithmetic progression `lo, lo + stride, ..., hi` of residual values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymbolSupport {
    lo: i32,
    hi: i32,
    stride: i32,
}

impl SymbolSupport {
    pub fn new(lo: i32, hi: i32, stride: i32) -> Result<Self> {
        if stride < 1 || lo > hi || (hi - lo) % stride != 0 {
            return Err(Error::InvalidSupport { lo, hi, stride });
        }
        Ok(Self { lo, hi, stride })
    }

    pub fn lo(&self) -> i32 {
        self.lo
    }

    pub fn hi(&self) -> i32 {
        self.hi
    }

    pub fn stride(&self) -> i32 {
        self.stride
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.stride + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbols(&self) -> impl Iterator<Item = i32> {
        (self.lo..=self.hi).step_by(self.stride as usize)
    }

    /// Position of `value` in the support, if it is a member.
    pub fn index_of(&self, value: i32) -> Option<usize> {
        if value < self.lo || value > self.hi || (value - self.lo) % self.stride != 0 {
            return None;
        }
        Some(((value - self.lo) / self.stride) as usize)
    }

    pub fn value_at(&self, index: usize) -> i32 {
        self.lo + index as i32 * self.stride
    }
}

/// Mixture parameters for one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticMixtureParams {
    channels: usize,
    /// `[k]`
    weights: Vec<f64>,
    /// `[channel][k]`
    means: Vec<f64>,
    /// `[channel][k]`
    scales: Vec<f64>,
    /// `[t][k]` with `t` in 0..3, empty for grayscale.
    coupling: Vec<f64>,
}

impl LogisticMixtureParams {
    pub fn new(
        channels: usize,
        weights: Vec<f64>,
        means: Vec<f64>,
        scales: Vec<f64>,
        coupling: Vec<f64>,
    ) -> Result<Self> {
        let k = weights.len();
        let bad = |msg: String| Err(Error::Tensor(msg));
        if k == 0 || !(channels == 1 || channels == 3) {
            return bad(format!("invalid mixture shape K={k} C={channels}"));
        }
        if means.len() != channels * k || scales.len() != channels * k {
            return bad("means/scales must hold C*K values".into());
        }
        let expected_coupling = if channels == 3 { 3 * k } else { 0 };
        if coupling.len() != expected_coupling {
            return bad(format!(
                "expected {expected_coupling} coupling coefficients"
            ));
        }
        let all = weights.iter().chain(&means).chain(&scales).chain(&coupling);
        if all.clone().any(|v| !v.is_finite()) {
            return bad("non-finite parameter".into());
        }
        if weights.iter().any(|&w| w < 0.0)
            || (weights.iter().sum::<f64>() - 1.0).abs() > WEIGHT_SUM_TOL
        {
            return bad("mixture weights must be a distribution".into());
        }
        if let Some(&s) = scales.iter().find(|&&s| s < SIGMA_MIN) {
            return Err(Error::SigmaTooSmall(s));
        }
        Ok(Self {
            channels,
            weights,
            means,
            scales,
            coupling,
        })
    }

    /// A single logistic per channel, no coupling.
    pub fn single(means: &[f64], scales: &[f64]) -> Result<Self> {
        let channels = means.len();
        let coupling = if channels == 3 { vec![0.0; 3] } else { vec![] };
        Self::new(
            channels,
            vec![1.0],
            means.to_vec(),
            scales.to_vec(),
            coupling,
        )
    }

    pub fn mixtures(&self) -> usize {
        self.weights.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self, channel: usize) -> &[f64] {
        let k = self.mixtures();
        &self.means[channel * k..(channel + 1) * k]
    }

    pub fn scales(&self, channel: usize) -> &[f64] {
        let k = self.mixtures();
        &self.scales[channel * k..(channel + 1) * k]
    }

    pub fn coupling(&self) -> &[f64] {
        &self.coupling
    }

    /// Means of `channel` shifted by the already decoded residuals of the
    /// earlier channels of the same pixel:
    /// `μ̃₂ = μ₂ + β₁·r₁`, `μ̃₃ = μ₃ + β₂·r₁ + β₃·r₂`, per component.
    pub fn update_means(&self, channel: usize, previous: &[i32]) -> Result<Vec<f64>> {
        if channel >= self.channels || previous.len() < channel {
            return Err(Error::ChannelOutOfRange(channel));
        }
        let k = self.mixtures();
        let beta = |t: usize, m: usize| self.coupling[t * k + m];
        let means = self.means(channel);
        Ok(match channel {
            0 => means.to_vec(),
            1 => (0..k)
                .map(|m| means[m] + beta(0, m) * f64::from(previous[0]))
                .collect(),
            _ => (0..k)
                .map(|m| {
                    means[m]
                        + beta(1, m) * f64::from(previous[0])
                        + beta(2, m) * f64::from(previous[1])
                })
                .collect(),
        })
    }

    /// The one-dimensional mixture for `channel`, means already updated.
    pub fn channel_mixture(&self, channel: usize, previous: &[i32]) -> Result<ChannelMixture<'_>> {
        Ok(ChannelMixture {
            weights: &self.weights,
            means: self.update_means(channel, previous)?,
            scales: self.scales(channel),
        })
    }
}

/// Mixture of logistics over a single channel.
#[derive(Debug, Clone)]
pub struct ChannelMixture<'a> {
    pub weights: &'a [f64],
    pub means: Vec<f64>,
    pub scales: &'a [f64],
}

/// Sigmoid of `z` and of `-z`, both to full relative precision.
#[inline]
fn sigmoid_pair(z: f64) -> (f64, f64) {
    let e = (-z.abs()).exp();
    let big = 1.0 / (1.0 + e);
    let small = e * big;
    if z >= 0.0 {
        (big, small)
    } else {
        (small, big)
    }
}

/// Logistic CDF of one component evaluated at a cut point.
#[derive(Clone, Copy)]
struct Cut {
    z: f64,
    below: f64,
    above: f64,
}

impl Cut {
    const NEG_INF: Cut = Cut {
        z: f64::NEG_INFINITY,
        below: 0.0,
        above: 1.0,
    };
    const POS_INF: Cut = Cut {
        z: f64::INFINITY,
        below: 1.0,
        above: 0.0,
    };

    fn at(x: f64, mean: f64, scale: f64) -> Cut {
        let z = (x - mean) / scale;
        let (below, above) = sigmoid_pair(z);
        Cut { z, below, above }
    }

    /// Mass between two cuts, using whichever tail keeps precision.
    #[inline]
    fn mass(lo: Cut, hi: Cut) -> f64 {
        if lo.z >= 0.0 {
            lo.above - hi.above
        } else {
            hi.below - lo.below
        }
    }
}

/// Probability of each support symbol under `mixture`.
///
/// A symbol `v` with stride `s` owns the interval `[v - s/2, v + s/2]`, so
/// stride 1 gives the usual `S((v+0.5-μ)/σ) - S((v-0.5-μ)/σ)` and a stride of
/// `2τ+1` gives the mass of a whole quantization bin. Mass below the first
/// and above the last symbol is folded into the end symbols, so the result
/// sums to one.
pub fn discrete_pmf(mixture: &ChannelMixture<'_>, support: SymbolSupport) -> Result<Vec<f64>> {
    let n = support.len();
    let mut pmf = vec![0.0; n];
    if n == 1 {
        pmf[0] = 1.0;
        return Ok(pmf);
    }
    let half = f64::from(support.stride()) / 2.0;
    let first_cut = f64::from(support.lo()) + half;
    let stride = f64::from(support.stride());
    for ((&w, &mean), &scale) in mixture
        .weights
        .iter()
        .zip(&mixture.means)
        .zip(mixture.scales)
    {
        if scale.is_nan() || scale < SIGMA_MIN {
            return Err(Error::SigmaTooSmall(scale));
        }
        if w == 0.0 {
            continue;
        }
        let mut lower = Cut::NEG_INF;
        for (i, p) in pmf.iter_mut().enumerate() {
            let upper = if i + 1 == n {
                Cut::POS_INF
            } else {
                Cut::at(first_cut + stride * i as f64, mean, scale)
            };
            *p += w * Cut::mass(lower, upper);
            lower = upper;
        }
    }
    Ok(pmf)
}

/// Mean and scale of a single logistic fitted to causal context residuals.
///
/// `μ` is the plain mean, `σ = max(1, 1.5 · mean absolute deviation)`; with no
/// context the estimate is `μ = 0`, `σ = 1`.
pub fn estimate_channel(context: &[i32]) -> (f64, f64) {
    if context.is_empty() {
        return (0.0, ESTIMATOR_SIGMA_FLOOR);
    }
    let n = context.len() as f64;
    let sum: i64 = context.iter().map(|&v| i64::from(v)).sum();
    let mean = sum as f64 / n;
    let mad = context
        .iter()
        .map(|&v| (f64::from(v) - mean).abs())
        .sum::<f64>()
        / n;
    (mean, ESTIMATOR_SIGMA_FLOOR.max(1.5 * mad))
}

/// Built-in `K = 1` estimator for a whole pixel: one context list per
/// channel, no channel coupling.
pub fn estimate_params(context: &[&[i32]]) -> LogisticMixtureParams {
    let (means, scales): (Vec<f64>, Vec<f64>) = context
        .iter()
        .map(|values| estimate_channel(values))
        .unzip();
    LogisticMixtureParams::single(&means, &scales).expect("estimator output is always valid")
}

const TENSOR_MAGIC: &[u8; 4] = b"LMT1";
const TENSOR_HEADER_LEN: usize = 20;

/// Per-pixel mixture parameters produced by an external model.
///
/// On disk: `"LMT1"`, then `H, W, K, C` as little-endian `u32`, then per
/// pixel in row-major order the `f32` values
/// `π[K] (logits), μ[C][K], σ[C][K] (raw, softplus applied), β[3][K]`,
/// where `β` is present only for `C = 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    height: usize,
    width: usize,
    mixtures: usize,
    channels: usize,
    pixels: Vec<LogisticMixtureParams>,
}

/// Number of `f32` values stored per pixel.
pub fn tensor_values_per_pixel(mixtures: usize, channels: usize) -> usize {
    let coupling = if channels == 3 { 3 } else { 0 };
    mixtures * (1 + 2 * channels + coupling)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl ParamTensor {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < TENSOR_HEADER_LEN {
            return Err(Error::Tensor("truncated header".into()));
        }
        if &bytes[..4] != TENSOR_MAGIC {
            return Err(Error::Tensor("bad magic".into()));
        }
        let word =
            |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let (height, width, mixtures, channels) = (word(0), word(1), word(2), word(3));
        Self::load(
            &bytes[TENSOR_HEADER_LEN..],
            height,
            width,
            mixtures,
            channels,
        )
    }

    /// Decodes the float payload for a known shape.
    pub fn load(
        payload: &[u8],
        height: usize,
        width: usize,
        mixtures: usize,
        channels: usize,
    ) -> Result<Self> {
        if height == 0 || width == 0 || mixtures == 0 || mixtures > 255 {
            return Err(Error::Tensor(format!(
                "invalid shape {height}x{width} K={mixtures}"
            )));
        }
        if !(channels == 1 || channels == 3) {
            return Err(Error::Tensor(format!("invalid channel count {channels}")));
        }
        let per_pixel = tensor_values_per_pixel(mixtures, channels);
        let expected = height * width * per_pixel * 4;
        if payload.len() != expected {
            return Err(Error::Tensor(format!(
                "payload is {} bytes, expected {expected}",
                payload.len()
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Tensor("non-finite value".into()));
        }
        let k = mixtures;
        let ck = channels * k;
        let pixels = values
            .chunks_exact(per_pixel)
            .map(|px| {
                let logits = &px[..k];
                let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
                let total: f64 = exps.iter().sum();
                let weights = exps.iter().map(|e| e / total).collect();
                let means = px[k..k + ck].to_vec();
                let scales = px[k + ck..k + 2 * ck]
                    .iter()
                    .map(|&s| softplus(s).max(SIGMA_MIN))
                    .collect();
                let coupling = px[k + 2 * ck..].to_vec();
                LogisticMixtureParams::new(channels, weights, means, scales, coupling)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            height,
            width,
            mixtures,
            channels,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mixtures(&self) -> usize {
        self.mixtures
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel(&self, row: usize, col: usize) -> &LogisticMixtureParams {
        &self.pixels[row * self.width + col]
    }
}

/// Serializes raw per-pixel values (logits and raw scales, as stored on
/// disk) into the tensor file format.
pub fn write_param_tensor(
    height: usize,
    width: usize,
    mixtures: usize,
    channels: usize,
    raw: &[f32],
) -> Result<Vec<u8>> {
    let expected = height * width * tensor_values_per_pixel(mixtures, channels);
    if raw.len() != expected {
        return Err(Error::Tensor(format!(
            "{} values supplied, expected {expected}",
            raw.len()
        )));
    }
    let mut out = Vec::with_capacity(TENSOR_HEADER_LEN + raw.len() * 4);
    out.extend_from_slice(TENSOR_MAGIC);
    for dim in [height, width, mixtures, channels] {
        let dim = u32::try_from(dim).map_err(|_| Error::Tensor("dimension overflow".into()))?;
        out.extend_from_slice(&dim.to_le_bytes());
    }
    for v in raw {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}
