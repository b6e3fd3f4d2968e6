//! Median binning: reduce `n` raw observations to `T = 2^J` bin medians and
//! estimate the noise level of the medians from adjacent pairs.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Bin geometry. `usable_n = t * m`; trailing observations beyond it are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinPlan {
    pub n_raw: usize,
    /// Number of bins, a power of two.
    pub t: usize,
    /// `log2(t)`.
    pub levels: usize,
    /// Bin size.
    pub m: usize,
    pub usable_n: usize,
}

/// Fix `T = 2^⌊log2(n / m_target)⌋`, then widen the bins to `m = ⌊n / T⌋`.
///
/// Enlarging `m` instead of shrinking `T` keeps the wasted tail below `T`.
pub fn plan_bins(n: usize, m_target: usize) -> Result<BinPlan> {
    if m_target == 0 {
        return Err(Error::invalid("m", "bin size must be at least 1"));
    }
    let needed = m_target.saturating_mul(2);
    if n < needed {
        return Err(Error::TooFewSamples { needed, got: n });
    }
    let ratio = n / m_target;
    let levels = (usize::BITS - 1 - ratio.leading_zeros()) as usize;
    let t = 1usize << levels;
    let m = n / t;
    Ok(BinPlan {
        n_raw: n,
        t,
        levels,
        m,
        usable_n: t * m,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianSeries {
    pub medians: Vec<f64>,
    pub plan: BinPlan,
}

/// Median of a scratch buffer; averages the two middle order statistics for even length.
fn median_in_place(buf: &mut [f64]) -> f64 {
    let len = buf.len();
    let mid = len / 2;
    let (lower, upper_mid, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper_mid;
    if len % 2 == 1 {
        upper
    } else {
        let lower_max = lower.iter().copied().max_by(f64::total_cmp).expect("even length >= 2");
        0.5 * (lower_max + upper)
    }
}

/// Sample median of a slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut buf = values.to_vec();
    Some(median_in_place(&mut buf))
}

/// Median of each consecutive block of `plan.m` observations.
pub fn bin_medians(y: &[f64], plan: &BinPlan) -> Result<MedianSeries> {
    if y.len() < plan.usable_n {
        return Err(Error::LengthMismatch {
            expected: plan.usable_n,
            got: y.len(),
        });
    }
    let medians = y[..plan.usable_n]
        .par_chunks(plan.m)
        .map(|bin| {
            let mut buf = bin.to_vec();
            median_in_place(&mut buf)
        })
        .collect();
    Ok(MedianSeries {
        medians,
        plan: *plan,
    })
}

/// Leading constant of the `h^{-2}(0)` estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceConstant {
    /// `4m/T`: unbiased when `Var(X_j) = 1 / (4 m h(0)^2)`.
    #[default]
    Calibrated,
    /// `8m/T` as printed; centres on `2 / h(0)^2`.
    PaperLiteral,
}

impl VarianceConstant {
    fn multiplier(self) -> f64 {
        match self {
            VarianceConstant::Calibrated => 4.0,
            VarianceConstant::PaperLiteral => 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaEstimate {
    /// Estimate of `h(0)^{-2}`.
    pub h_inv_sq: f64,
    /// Estimate of the per-coefficient noise variance `σ_n² = 1 / (4 h(0)² n)`.
    pub sigma2: f64,
}

/// Pair-difference estimator: with `S = Σ_k (X_{2k-1} - X_{2k})²`,
/// `h_inv_sq = c m S / T` and `sigma2 = h_inv_sq / (4 usable_n)`.
pub fn estimate_sigma2(med: &MedianSeries, constant: VarianceConstant) -> Result<SigmaEstimate> {
    let t = med.medians.len();
    if t % 2 != 0 {
        return Err(Error::invalid("T", format!("number of bins must be even, got {t}")));
    }
    if t < 4 {
        return Err(Error::invalid("T", format!("need at least 4 bins, got {t}")));
    }
    let s: f64 = med
        .medians
        .chunks_exact(2)
        .map(|pair| (pair[0] - pair[1]).powi(2))
        .sum();
    let m = med.plan.m as f64;
    let h_inv_sq = constant.multiplier() * m * s / t as f64;
    let sigma2 = h_inv_sq / (4.0 * med.plan.usable_n as f64);
    Ok(SigmaEstimate { h_inv_sq, sigma2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plan_examples() {
        let p = plan_bins(4096, 8).unwrap();
        assert_eq!((p.t, p.levels, p.m, p.usable_n), (512, 9, 8, 4096));
        let p = plan_bins(1024, 4).unwrap();
        assert_eq!((p.t, p.m, p.usable_n), (256, 4, 1024));
        let p = plan_bins(1000, 8).unwrap();
        assert_eq!((p.t, p.levels, p.m, p.usable_n), (64, 6, 15, 960));
    }

    #[test]
    fn plan_errors() {
        assert!(matches!(plan_bins(15, 8), Err(Error::TooFewSamples { needed: 16, got: 15 })));
        assert!(plan_bins(100, 0).is_err());
        assert_eq!(plan_bins(16, 8).unwrap().t, 2);
    }

    #[test]
    fn medians_reject_outlier() {
        let plan = BinPlan { n_raw: 6, t: 2, levels: 1, m: 3, usable_n: 6 };
        let s = bin_medians(&[1.0, 2.0, 100.0, 3.0, 4.0, 5.0], &plan).unwrap();
        assert_eq!(s.medians, vec![2.0, 4.0]);
    }

    #[test]
    fn even_bins_use_midpoint() {
        let plan = BinPlan { n_raw: 4, t: 1, levels: 0, m: 4, usable_n: 4 };
        let s = bin_medians(&[9.0, 1.0, 3.0, 2.0], &plan).unwrap();
        assert_eq!(s.medians, vec![2.5]);
    }

    #[test]
    fn identity_binning_and_constants() {
        let y: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let plan = plan_bins(37, 1).unwrap();
        assert_eq!(plan.t, 32);
        assert_eq!(bin_medians(&y, &plan).unwrap().medians, y[..32].to_vec());
        let plan = plan_bins(100, 3).unwrap();
        let s = bin_medians(&[4.25; 100], &plan).unwrap();
        assert!(s.medians.iter().all(|&v| v == 4.25));
    }

    #[test]
    fn short_input_is_an_error() {
        let plan = plan_bins(64, 4).unwrap();
        assert!(matches!(bin_medians(&[0.0; 63], &plan), Err(Error::LengthMismatch { .. })));
    }

    fn series(medians: Vec<f64>, m: usize) -> MedianSeries {
        let t = medians.len();
        MedianSeries {
            medians,
            plan: BinPlan { n_raw: t * m, t, levels: t.trailing_zeros() as usize, m, usable_n: t * m },
        }
    }

    #[test]
    fn sigma_hand_values() {
        let e = estimate_sigma2(&series(vec![1.5; 8], 4), VarianceConstant::Calibrated).unwrap();
        assert_eq!((e.h_inv_sq, e.sigma2), (0.0, 0.0));

        let (a, m, t) = (0.75, 6, 16);
        let alt: Vec<f64> = (0..t).map(|i| if i % 2 == 0 { a } else { -a }).collect();
        let e = estimate_sigma2(&series(alt.clone(), m), VarianceConstant::Calibrated).unwrap();
        assert!((e.h_inv_sq - 8.0 * m as f64 * a * a).abs() < 1e-12);
        assert!((e.sigma2 - 2.0 * a * a / t as f64).abs() < 1e-15);
        let lit = estimate_sigma2(&series(alt, m), VarianceConstant::PaperLiteral).unwrap();
        assert!((lit.h_inv_sq - 2.0 * e.h_inv_sq).abs() < 1e-12);
    }

    #[test]
    fn sigma_requires_even_t_of_at_least_four() {
        assert!(estimate_sigma2(&series(vec![0.0; 2], 1), VarianceConstant::Calibrated).is_err());
        let mut odd = series(vec![0.0; 4], 1);
        odd.medians.pop();
        assert!(estimate_sigma2(&odd, VarianceConstant::Calibrated).is_err());
    }

    proptest! {
        #[test]
        fn shift_equivariance(y in prop::collection::vec(-1e3f64..1e3, 64), c in -50.0f64..50.0) {
            let plan = plan_bins(64, 5).unwrap();
            let base = bin_medians(&y, &plan).unwrap();
            let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
            let moved = bin_medians(&shifted, &plan).unwrap();
            for (a, b) in base.medians.iter().zip(&moved.medians) {
                prop_assert!((a + c - b).abs() <= 1e-12 * (1.0 + a.abs() + c.abs()));
            }
        }

        #[test]
        fn medians_stay_inside_their_bins(y in prop::collection::vec(-1e6f64..1e6, 40..200), m in 1usize..9) {
            prop_assume!(y.len() >= 2 * m);
            let plan = plan_bins(y.len(), m).unwrap();
            let s = bin_medians(&y, &plan).unwrap();
            for (bin, med) in y.chunks(plan.m).zip(&s.medians) {
                let lo = bin.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = bin.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*med >= lo && *med <= hi);
            }
        }

        #[test]
        fn contamination_is_contained(
            y in prop::collection::vec(-10.0f64..10.0, 64),
            bin in 0usize..8,
            k in 0usize..4,
            sign in prop::bool::ANY,
        ) {
            // m = 8: fewer than ceil(8/2) = 4 corrupted entries
            let plan = plan_bins(64, 8).unwrap();
            let clean = bin_medians(&y, &plan).unwrap();
            let mut dirty = y.clone();
            let big = if sign { 1e9 } else { -1e9 };
            for v in dirty[bin * 8..bin * 8 + k].iter_mut() {
                *v = big;
            }
            let out = bin_medians(&dirty, &plan).unwrap();
            for j in 0..plan.t {
                if j != bin {
                    prop_assert_eq!(out.medians[j], clean.medians[j]);
                }
            }
            let lo = y[bin * 8..bin * 8 + 8].iter().copied().fold(f64::INFINITY, f64::min);
            let hi = y[bin * 8..bin * 8 + 8].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out.medians[bin] >= lo && out.medians[bin] <= hi);
        }

        #[test]
        fn sigma_is_shift_invariant(y in prop::collection::vec(-5.0f64..5.0, 128), c in -100.0f64..100.0) {
            let plan = plan_bins(128, 4).unwrap();
            let a = estimate_sigma2(&bin_medians(&y, &plan).unwrap(), VarianceConstant::Calibrated).unwrap();
            let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
            let b = estimate_sigma2(&bin_medians(&shifted, &plan).unwrap(), VarianceConstant::Calibrated).unwrap();
            prop_assert!((a.sigma2 - b.sigma2).abs() <= 1e-9 * (1.0 + a.sigma2));
        }
    }
}
