use lpr_core::coder::PROB_TOTAL;
use lpr_core::{build_cdf, SymbolSupport};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;

/// Largest-remainder rounding to 2^16 followed by the zero-count repair,
/// done one unit at a time in exact arithmetic.
fn oracle_counts(pmf: &[f64]) -> Vec<u32> {
    let total = BigRational::from_integer(BigInt::from(PROB_TOTAL));
    let scaled: Vec<BigRational> = pmf
        .iter()
        .map(|&p| BigRational::from_float(p).unwrap() * &total)
        .collect();
    let mut counts: Vec<u32> = scaled
        .iter()
        .map(|s| s.floor().to_integer().to_u32().unwrap())
        .collect();
    let rems: Vec<BigRational> = scaled.iter().map(|s| s - s.floor()).collect();
    let assigned: u32 = counts.iter().sum();
    let mut order: Vec<usize> = (0..pmf.len()).collect();
    order.sort_by(|&a, &b| rems[b].cmp(&rems[a]).then(a.cmp(&b)));
    let mut short = PROB_TOTAL - assigned;
    let mut i = 0;
    while short > 0 {
        counts[order[i % order.len()]] += 1;
        short -= 1;
        i += 1;
    }
    for z in 0..counts.len() {
        if counts[z] == 0 {
            counts[z] = 1;
            let top = (0..counts.len())
                .fold(0, |best, k| if counts[k] > counts[best] { k } else { best });
            counts[top] -= 1;
        }
    }
    counts
}

fn normalized(raw: Vec<f64>) -> Vec<f64> {
    let t: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / t).collect()
}

fn pmf_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0.0f64..1.0, 0u32..8), 1..300).prop_map(|v| {
        let raw: Vec<f64> = v.into_iter().map(|(u, e)| u.powi(e as i32 * 3)).collect();
        let raw = if raw.iter().all(|&x| x == 0.0) {
            vec![1.0; raw.len()]
        } else {
            raw
        };
        normalized(raw)
    })
}

proptest! {
    #[test]
    fn counts_match_exact_oracle(pmf in pmf_strategy(), lo in -255i32..0) {
        let support = SymbolSupport::new(lo, lo + pmf.len() as i32 - 1, 1).unwrap();
        let cdf = build_cdf(&pmf, support).unwrap();
        let got: Vec<u32> = (0..pmf.len()).map(|i| cdf.count(i)).collect();
        let expect = oracle_counts(&pmf);
        prop_assert_eq!(&got, &expect);
        prop_assert_eq!(cdf.cumulative()[pmf.len()], PROB_TOTAL);
        prop_assert!(got.iter().all(|&c| c >= 1));
    }

    #[test]
    fn unrepaired_counts_stay_within_one_unit(pmf in pmf_strategy()) {
        let support = SymbolSupport::new(0, pmf.len() as i32 - 1, 1).unwrap();
        let cdf = build_cdf(&pmf, support).unwrap();
        let repaired = pmf.iter().any(|&p| p * f64::from(PROB_TOTAL) < 1.0);
        if !repaired {
            for (i, &p) in pmf.iter().enumerate() {
                let gap = (cdf.probability(i) - p).abs();
                prop_assert!(gap <= 1.0 / f64::from(PROB_TOTAL) + 1e-12, "symbol {i}: {gap}");
            }
        }
    }
}

#[test]
fn oracle_sanity() {
    assert_eq!(oracle_counts(&[0.5, 0.5]), vec![32768, 32768]);
    assert_eq!(oracle_counts(&[1.0 - 1e-9, 1e-9]), vec![65535, 1]);
    let third = oracle_counts(&[1.0 / 3.0; 3]);
    assert_eq!(third.iter().sum::<u32>(), PROB_TOTAL);
    assert_eq!(third, vec![21846, 21845, 21845]);
    assert!(!BigRational::from_float(0.25).unwrap().is_zero());
}
