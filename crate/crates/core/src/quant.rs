//! ℓ∞-bounded residual quantization and the matching PMF quantization.
//!
//! A residual `r` is mapped to the centre of a bin of width `2τ+1`, so the
//! reconstruction error never exceeds `τ`. Bins are centred on multiples of
//! `2τ+1`, which keeps zero a bin centre for every `τ`.

use crate::error::{Error, Result};
use crate::model::SymbolSupport;

/// The ℓ∞ error bound; zero means lossless.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Tau(u8);

impl Tau {
    pub const LOSSLESS: Tau = Tau(0);

    pub fn new(value: u32) -> Result<Self> {
        u8::try_from(value)
            .map(Tau)
            .map_err(|_| Error::InvalidTau(value))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn is_lossless(self) -> bool {
        self.0 == 0
    }

    /// Bin width `2τ+1`.
    pub fn step(self) -> i32 {
        2 * i32::from(self.0) + 1
    }
}

/// `sgn(r) · (2τ+1) · ⌊(|r| + τ) / (2τ+1)⌋`.
pub fn quantize_residual(r: i32, tau: Tau) -> i32 {
    let step = tau.step();
    r.signum() * step * ((r.abs() + i32::from(tau.get())) / step)
}

/// Bin centre that `v` falls into. The decoder never sees `v` itself; this
/// is the classification used when mapping stride-1 supports onto bins.
pub fn bin_of(v: i32, tau: Tau) -> i32 {
    let step = tau.step();
    // bins are [c - τ, c + τ] for every multiple c of the step
    step * (v + i32::from(tau.get())).div_euclid(step)
}

/// Sums a stride-1 PMF into bins of width `2τ+1`.
///
/// The returned support runs from the bin of `support.lo` to the bin of
/// `support.hi`. Edge bins that only partly overlap the input support keep
/// just the mass of their in-support members.
pub fn quantize_pmf(
    pmf: &[f64],
    support: SymbolSupport,
    tau: Tau,
) -> Result<(SymbolSupport, Vec<f64>)> {
    if support.stride() != 1 || pmf.len() != support.len() || pmf.is_empty() {
        return Err(Error::InvalidSupport {
            lo: support.lo(),
            hi: support.hi(),
            stride: support.stride(),
        });
    }
    let step = tau.step();
    let lo = bin_of(support.lo(), tau);
    let hi = bin_of(support.hi(), tau);
    let out_support = SymbolSupport::new(lo, hi, step)?;
    let mut out = vec![0.0; out_support.len()];
    for (v, &p) in (support.lo()..=support.hi()).zip(pmf) {
        out[((bin_of(v, tau) - lo) / step) as usize] += p;
    }
    Ok((out_support, out))
}
