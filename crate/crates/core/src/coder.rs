//! Range coding of residual symbols against 16-bit quantized CDFs.
//!
//! The coder keeps a 64-bit `low` (33 significant bits) and a 32-bit
//! `range`, renormalizes a byte at a time and resolves carries with a
//! cached byte plus a run of pending `0xFF` bytes.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::image::{ResidualGrid, MAX_RESIDUAL};
use crate::model::SymbolSupport;
use crate::quant::{bin_of, quantize_residual, Tau};

pub const PROB_BITS: u32 = 16;
pub const PROB_TOTAL: u32 = 1 << PROB_BITS;
const TOP: u32 = 1 << 24;

/// Symbol frequencies of a support, summing to `2^16`, each at least one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedCdf {
    support: SymbolSupport,
    /// `cum[i]` is the total count of symbols before index `i`; `len + 1`
    /// entries ending in `PROB_TOTAL`.
    cum: Vec<u32>,
}

impl QuantizedCdf {
    pub fn support(&self) -> SymbolSupport {
        self.support
    }

    pub fn cumulative(&self) -> &[u32] {
        &self.cum
    }

    pub fn count(&self, index: usize) -> u32 {
        self.cum[index + 1] - self.cum[index]
    }

    /// Quantized probability of the symbol at `index`.
    pub fn probability(&self, index: usize) -> f64 {
        f64::from(self.count(index)) / f64::from(PROB_TOTAL)
    }

    /// Index of the symbol whose slot contains `target`.
    fn find(&self, target: u32) -> usize {
        self.cum.partition_point(|&c| c <= target) - 1
    }
}

/// Quantizes a PMF to integer counts summing to `2^16`.
///
/// Counts start as `⌊p·2^16⌋`; the shortfall is handed out one unit each to
/// the largest fractional parts (lowest index on ties). Any symbol left at
/// zero is then raised to one, taking units from the currently largest count.
pub fn build_cdf(pmf: &[f64], support: SymbolSupport) -> Result<QuantizedCdf> {
    let n = support.len();
    if n > PROB_TOTAL as usize {
        return Err(Error::SupportTooLarge(n));
    }
    if pmf.len() != n {
        return Err(Error::InvalidSupport {
            lo: support.lo(),
            hi: support.hi(),
            stride: support.stride(),
        });
    }
    let scale = f64::from(PROB_TOTAL);
    let mut counts = Vec::with_capacity(n);
    let mut remainders = Vec::with_capacity(n);
    let mut assigned: u64 = 0;
    for &p in pmf {
        let scaled = (p.max(0.0) * scale).min(scale);
        // truncation is the floor for non-negative values
        let whole = scaled as u32;
        counts.push(whole);
        remainders.push(scaled - f64::from(whole));
        assigned += u64::from(whole);
    }
    if assigned > u64::from(PROB_TOTAL) {
        // only reachable with a PMF that sums above one
        return Err(Error::InvalidSupport {
            lo: support.lo(),
            hi: support.hi(),
            stride: support.stride(),
        });
    }
    let mut shortfall = (u64::from(PROB_TOTAL) - assigned) as usize;
    if shortfall > 0 {
        // non-negative floats order like their bit patterns, so inverting
        // the bits sorts the largest remainder first, lowest index on ties
        let mut order: Vec<(u64, u32)> = remainders
            .iter()
            .enumerate()
            .map(|(i, r)| (!r.to_bits(), i as u32))
            .collect();
        if shortfall < n {
            order.select_nth_unstable(shortfall - 1);
        } else {
            order.sort_unstable();
        }
        // a PMF summing slightly below one can leave more units than symbols
        while shortfall > 0 {
            let take = shortfall.min(n);
            for &(_, i) in &order[..take] {
                counts[i as usize] += 1;
            }
            shortfall -= take;
        }
    }
    repair_zero_counts(&mut counts);
    let mut cum = Vec::with_capacity(n + 1);
    let mut acc = 0;
    cum.push(0);
    for c in counts {
        acc += c;
        cum.push(acc);
    }
    debug_assert_eq!(acc, PROB_TOTAL);
    Ok(QuantizedCdf { support, cum })
}

fn repair_zero_counts(counts: &mut [u32]) {
    let mut missing = 0u32;
    for c in counts.iter_mut().filter(|c| **c == 0) {
        *c = 1;
        missing += 1;
    }
    if missing == 0 {
        return;
    }
    let mut heap: BinaryHeap<(u32, Reverse<usize>)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 1)
        .map(|(i, &c)| (c, Reverse(i)))
        .collect();
    while missing > 0 {
        let (top, Reverse(i)) = heap
            .pop()
            .expect("total count leaves room for every symbol");
        let next = heap.peek().map_or(1, |&(c, _)| c);
        // taking from the largest one unit at a time reaches `next` first
        let take = missing.min((top - next).max(1)).min(top - 1);
        counts[i] -= take;
        missing -= take;
        if counts[i] > 1 {
            heap.push((counts[i], Reverse(i)));
        }
    }
}

/// Byte-wise range encoder.
#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    pending: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            pending: 1,
            out: Vec::new(),
        }
    }

    /// Encodes the symbol occupying `[start, start + count)` out of `2^16`.
    pub fn encode(&mut self, start: u32, count: u32) {
        debug_assert!(count > 0 && start + count <= PROB_TOTAL);
        let r = self.range >> PROB_BITS;
        self.low += u64::from(r) * u64::from(start);
        self.range = r * count;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    pub fn encode_symbol(&mut self, cdf: &QuantizedCdf, value: i32) -> Result<()> {
        let index = cdf
            .support
            .index_of(value)
            .ok_or(Error::SymbolOutsideSupport(value))?;
        self.encode(cdf.cum[index], cdf.count(index));
        Ok(())
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low >= 1 << 32 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            while self.pending > 0 {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.pending -= 1;
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        // the leading byte only ever holds a carry that cannot occur
        debug_assert_eq!(self.out.first(), Some(&0));
        self.out.remove(0);
        self.out
    }
}

/// Decoder matching [`RangeEncoder`].
#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    bytes: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self> {
        let mut dec = Self {
            bytes,
            pos: 0,
            code: 0,
            range: u32::MAX,
        };
        for _ in 0..4 {
            dec.code = (dec.code << 8) | u32::from(dec.next_byte()?);
        }
        Ok(dec)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self.bytes.get(self.pos).ok_or(Error::StreamExhausted)?;
        self.pos += 1;
        Ok(b)
    }

    pub fn decode_symbol(&mut self, cdf: &QuantizedCdf) -> Result<i32> {
        let r = self.range >> PROB_BITS;
        let target = (self.code / r).min(PROB_TOTAL - 1);
        let index = cdf.find(target);
        let start = cdf.cum[index];
        self.code -= r * start;
        self.range = r * cdf.count(index);
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | u32::from(self.next_byte()?);
        }
        Ok(cdf.support.value_at(index))
    }

    /// Bytes consumed so far.
    pub fn position(&self) -> usize {
        self.pos
    }

    /// Checks that the stream ended exactly where the encoder's flush did.
    ///
    /// The flush writes out `low` in full, so after the last symbol the code
    /// value must be zero and every byte consumed. Any altered byte that did
    /// not already change a decoded symbol fails here.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::CorruptStream("trailing bytes after coded symbols"));
        }
        if self.code != 0 {
            return Err(Error::CorruptStream(
                "coded stream does not end on its flush",
            ));
        }
        Ok(())
    }
}

/// Codes `symbols` against their CDFs, one CDF per symbol.
pub fn encode_stream<'a>(
    items: impl IntoIterator<Item = (i32, &'a QuantizedCdf)>,
) -> Result<Vec<u8>> {
    let mut enc = RangeEncoder::new();
    for (value, cdf) in items {
        enc.encode_symbol(cdf, value)?;
    }
    Ok(enc.finish())
}

/// Decodes `count` symbols. `next_cdf` receives the symbols decoded so far
/// and must return the CDF the encoder used for the next one. `bytes` must
/// be exactly one stream produced by [`encode_stream`].
pub fn decode_stream(
    bytes: &[u8],
    count: usize,
    mut next_cdf: impl FnMut(&[i32]) -> Result<QuantizedCdf>,
) -> Result<Vec<i32>> {
    let mut dec = RangeDecoder::new(bytes)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let cdf = next_cdf(&out)?;
        out.push(dec.decode_symbol(&cdf)?);
    }
    dec.finish()?;
    Ok(out)
}

/// Observed range of (quantized) residuals of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResidualInterval {
    pub min: i32,
    pub max: i32,
}

impl ResidualInterval {
    /// Interval of the quantized residuals; values already on bin centres
    /// are left as they are.
    pub fn of(grid: &ResidualGrid, tau: Tau) -> Self {
        let (lo, hi) = grid.min_max();
        // quantization is monotone, so the extremes map to the extremes
        Self {
            min: quantize_residual(lo, tau),
            max: quantize_residual(hi, tau),
        }
    }

    /// The unreduced interval `[-255, 255]` mapped onto bins.
    pub fn full(tau: Tau) -> Self {
        Self {
            min: bin_of(-MAX_RESIDUAL, tau),
            max: bin_of(MAX_RESIDUAL, tau),
        }
    }

    /// Symbols `min, min + 2τ+1, ..., max`.
    pub fn support(&self, tau: Tau) -> Result<SymbolSupport> {
        SymbolSupport::new(self.min, self.max, tau.step())
    }
}

/// Interval of `grid` after quantization with `tau`.
pub fn residual_interval(grid: &ResidualGrid, tau: Tau) -> ResidualInterval {
    ResidualInterval::of(grid, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn support(lo: i32, hi: i32) -> SymbolSupport {
        SymbolSupport::new(lo, hi, 1).unwrap()
    }

    fn random_pmf(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powi(4)).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|v| v / total).collect()
    }

    #[test]
    fn uniform_pair() {
        let cdf = build_cdf(&[0.5, 0.5], support(0, 1)).unwrap();
        assert_eq!(cdf.cumulative(), &[0, 32768, 65536]);
    }

    #[test]
    fn floor_repair() {
        let cdf = build_cdf(&[1.0 - 1e-9, 1e-9], support(0, 1)).unwrap();
        assert_eq!((cdf.count(0), cdf.count(1)), (65535, 1));
    }

    #[test]
    fn repair_takes_from_the_largest() {
        let mut pmf = vec![0.0; 10];
        pmf[3] = 0.75;
        pmf[7] = 0.25;
        let cdf = build_cdf(&pmf, support(0, 9)).unwrap();
        let counts: Vec<_> = (0..10).map(|i| cdf.count(i)).collect();
        assert_eq!(counts, vec![1, 1, 1, 49144, 1, 1, 1, 16384, 1, 1]);
    }

    #[test]
    fn support_too_large() {
        let s = support(0, 65536);
        assert_eq!(
            build_cdf(&vec![0.0; 65537], s),
            Err(Error::SupportTooLarge(65537))
        );
        let cdf = build_cdf(&vec![1.0 / 65536.0; 65536], support(0, 65535)).unwrap();
        assert!((0..65536).all(|i| cdf.count(i) == 1));
    }

    #[test]
    fn certain_symbol_costs_almost_nothing() {
        let cdf = build_cdf(&[1.0], support(4, 4)).unwrap();
        let bytes = encode_stream(std::iter::repeat_n((4, &cdf), 10_000)).unwrap();
        assert!(bytes.len() <= 32);
        let out = decode_stream(&bytes, 10_000, |_| Ok(cdf.clone())).unwrap();
        assert!(out.iter().all(|&v| v == 4));
    }

    #[test]
    fn rejects_symbols_outside_support() {
        let cdf = build_cdf(&[0.5, 0.5], support(0, 1)).unwrap();
        assert_eq!(
            encode_stream([(2, &cdf)]),
            Err(Error::SymbolOutsideSupport(2))
        );
    }

    #[test]
    fn truncated_stream_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cdf = build_cdf(&random_pmf(&mut rng, 30), support(-15, 14)).unwrap();
        let symbols: Vec<i32> = (0..500).map(|_| rng.gen_range(-15..=14)).collect();
        let bytes = encode_stream(symbols.iter().map(|&s| (s, &cdf))).unwrap();
        let res = decode_stream(
            &bytes[..bytes.len() / 2],
            symbols.len(),
            |_| Ok(cdf.clone()),
        );
        assert_eq!(res, Err(Error::StreamExhausted));
        assert_eq!(
            decode_stream(&[], 1, |_| Ok(cdf.clone())),
            Err(Error::StreamExhausted)
        );
    }

    #[test]
    fn decoder_consumes_exactly_the_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.gen_range(1..40);
            let cdf = build_cdf(&random_pmf(&mut rng, n), support(0, n as i32 - 1)).unwrap();
            let len = rng.gen_range(0..300);
            let symbols: Vec<i32> = (0..len).map(|_| rng.gen_range(0..n as i32)).collect();
            let bytes = encode_stream(symbols.iter().map(|&s| (s, &cdf))).unwrap();
            let mut dec = RangeDecoder::new(&bytes).unwrap();
            for &s in &symbols {
                assert_eq!(dec.decode_symbol(&cdf).unwrap(), s);
            }
            assert_eq!(dec.position(), bytes.len());
            dec.finish().unwrap();
        }
    }

    #[test]
    fn intervals() {
        let zeros = ResidualGrid::zeros(2, 2, 1).unwrap();
        let i = residual_interval(&zeros, Tau::LOSSLESS);
        assert_eq!((i.min, i.max), (0, 0));
        assert_eq!(i.support(Tau::LOSSLESS).unwrap().len(), 1);

        let grid = ResidualGrid::new(1, 7, 1, vec![-3, -2, -1, 0, 1, 2, 3]).unwrap();
        let tau = Tau::new(1).unwrap();
        let i = residual_interval(&grid, tau);
        let s = i.support(tau).unwrap();
        assert_eq!(s.symbols().collect::<Vec<_>>(), vec![-3, 0, 3]);

        let full = ResidualGrid::new(1, 2, 1, vec![-255, 255]).unwrap();
        let i = residual_interval(&full, Tau::LOSSLESS);
        assert_eq!((i.min, i.max), (-255, 255));
        assert_eq!(i.support(Tau::LOSSLESS).unwrap().len(), 511);
        assert_eq!(ResidualInterval::full(Tau::LOSSLESS), i);
        let f1 = ResidualInterval::full(tau);
        assert_eq!((f1.min, f1.max), (-255, 255));
        assert_eq!(f1.support(tau).unwrap().len(), 171);
    }

    proptest! {
        #[test]
        fn random_streams_round_trip(
            seed in any::<u64>(),
            n in 1usize..300,
            len in 0usize..400,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lo = rng.gen_range(-300..300);
            let cdfs: Vec<QuantizedCdf> = (0..len.max(1))
                .map(|_| build_cdf(&random_pmf(&mut rng, n), support(lo, lo + n as i32 - 1)).unwrap())
                .collect();
            let symbols: Vec<i32> = (0..len).map(|_| rng.gen_range(lo..lo + n as i32)).collect();
            let bytes = encode_stream(symbols.iter().zip(&cdfs).map(|(&s, c)| (s, c))).unwrap();
            let decoded = decode_stream(&bytes, len, |done| Ok(cdfs[done.len()].clone())).unwrap();
            prop_assert_eq!(decoded, symbols);
        }

        #[test]
        fn every_symbol_keeps_a_slot(seed in any::<u64>(), n in 1usize..600) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pmf = random_pmf(&mut rng, n);
            // make most of the mass collapse onto one symbol
            for p in pmf.iter_mut() { *p *= 1e-7; }
            let rest: f64 = pmf.iter().sum();
            pmf[rng.gen_range(0..n)] += 1.0 - rest;
            let cdf = build_cdf(&pmf, support(0, n as i32 - 1)).unwrap();
            prop_assert_eq!(*cdf.cumulative().last().unwrap(), PROB_TOTAL);
            prop_assert!((0..n).all(|i| cdf.count(i) >= 1));
        }
    }
}
