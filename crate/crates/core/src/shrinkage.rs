//! Block James–Stein thresholding of wavelet coefficients and the robust
//! denoiser built on top of median binning.

use std::fmt;
use std::str::FromStr;

use crate::binning::{bin_medians, estimate_sigma2, plan_bins, BinPlan, MedianSeries, VarianceConstant};
use crate::error::{Error, Result};
use crate::wavelet::{forward, synthesize_function, WaveletFilter, WaveletPyramid};

/// Root above one of `λ - ln λ = 3`, by safeguarded Newton on `[4, 5]`.
pub fn solve_lambda_star() -> f64 {
    let f = |l: f64| l - l.ln() - 3.0;
    let (mut lo, mut hi) = (4.0_f64, 5.0_f64);
    let mut x = 4.5;
    for _ in 0..100 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = fx / (1.0 - 1.0 / x);
        let next = x - step;
        x = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if step.abs() < 1e-15 * x {
            break;
        }
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BlockLength {
    /// Largest power of two not exceeding `ln(usable_n)`.
    #[default]
    AutoLog,
    Fixed(usize),
}

impl BlockLength {
    pub fn resolve(self, usable_n: usize) -> Result<usize> {
        match self {
            BlockLength::AutoLog => {
                let ln = (usable_n as f64).ln();
                let mut l = 1usize;
                while ((2 * l) as f64) <= ln {
                    l *= 2;
                }
                Ok(l)
            }
            BlockLength::Fixed(0) => Err(Error::invalid("block_len", "must be at least 1")),
            BlockLength::Fixed(l) => Ok(l),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LevelCutoff {
    /// Threshold every detail level (`J* = J - 1`).
    #[default]
    AllLevels,
    /// `J* = ⌊log2(T / ln^{1+b} n)⌋`, clamped into `[j0, J - 1]`.
    LogPower { b: f64 },
}

impl LevelCutoff {
    pub fn resolve(self, plan: &BinPlan, j0: usize) -> usize {
        let top = plan.levels - 1;
        match self {
            LevelCutoff::AllLevels => top,
            LevelCutoff::LogPower { b } => {
                let ln_n = (plan.usable_n as f64).ln();
                let raw = (plan.t as f64 / ln_n.powf(1.0 + b)).log2().floor();
                if raw.is_finite() {
                    (raw.max(j0 as f64) as usize).min(top)
                } else {
                    j0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaRule {
    Estimate(VarianceConstant),
    /// Known per-coefficient variance `σ_n²`.
    Known(f64),
}

impl Default for SigmaRule {
    fn default() -> Self {
        SigmaRule::Estimate(VarianceConstant::Calibrated)
    }
}

impl fmt::Display for BlockLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockLength::AutoLog => write!(f, "auto"),
            BlockLength::Fixed(l) => write!(f, "{l}"),
        }
    }
}

impl FromStr for BlockLength {
    type Err = Error;

    /// `auto` or a positive integer.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(BlockLength::AutoLog),
            t => match t.parse::<usize>() {
                Ok(l) if l > 0 => Ok(BlockLength::Fixed(l)),
                _ => Err(Error::invalid("block_len", format!("expected `auto` or a positive integer, got {s:?}"))),
            },
        }
    }
}

impl fmt::Display for LevelCutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelCutoff::AllLevels => write!(f, "all"),
            LevelCutoff::LogPower { b } => write!(f, "log:{b}"),
        }
    }
}

impl FromStr for LevelCutoff {
    type Err = Error;

    /// `all`, `log` (b = 1) or `log:<b>` with `b > 0`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid("level_cutoff", format!("expected `all`, `log` or `log:<b>`, got {s:?}"));
        match s.trim().split_once(':') {
            None if s.trim() == "all" => Ok(LevelCutoff::AllLevels),
            None if s.trim() == "log" => Ok(LevelCutoff::LogPower { b: 1.0 }),
            Some(("log", b)) => match b.parse::<f64>() {
                Ok(b) if b > 0.0 && b.is_finite() => Ok(LevelCutoff::LogPower { b }),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for SigmaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaRule::Estimate(VarianceConstant::Calibrated) => write!(f, "calibrated"),
            SigmaRule::Estimate(VarianceConstant::PaperLiteral) => write!(f, "literal"),
            SigmaRule::Known(v) => write!(f, "known:{v}"),
        }
    }
}

impl FromStr for SigmaRule {
    type Err = Error;

    /// `calibrated` (4m/T), `literal` (8m/T) or `known:<sigma2>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid("sigma", format!("expected `calibrated`, `literal` or `known:<sigma2>`, got {s:?}"));
        match s.trim().split_once(':') {
            None if s.trim() == "calibrated" => Ok(SigmaRule::Estimate(VarianceConstant::Calibrated)),
            None if s.trim() == "literal" => Ok(SigmaRule::Estimate(VarianceConstant::PaperLiteral)),
            Some(("known", v)) => match v.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.is_finite() => Ok(SigmaRule::Known(v)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub m_target: usize,
    pub filter: WaveletFilter,
    pub j0: usize,
    pub block_len: BlockLength,
    pub lambda_star: f64,
    pub level_cutoff: LevelCutoff,
    pub sigma_rule: SigmaRule,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            m_target: 8,
            filter: WaveletFilter::d8(),
            j0: 3,
            block_len: BlockLength::AutoLog,
            lambda_star: solve_lambda_star(),
            level_cutoff: LevelCutoff::AllLevels,
            sigma_rule: SigmaRule::default(),
        }
    }
}

impl EstimatorConfig {
    /// Same configuration without binning (`m = 1`): the direct estimator.
    pub fn direct(&self) -> Self {
        Self {
            m_target: 1,
            ..self.clone()
        }
    }

    pub(crate) fn sigma2(&self, med: &MedianSeries) -> Result<f64> {
        match self.sigma_rule {
            SigmaRule::Estimate(c) => Ok(estimate_sigma2(med, c)?.sigma2),
            SigmaRule::Known(s) if s >= 0.0 && s.is_finite() => Ok(s),
            SigmaRule::Known(s) => Err(Error::invalid("sigma2", format!("must be nonnegative, got {s}"))),
        }
    }
}

/// Shrink factor `(1 - λ L σ² / S²)_+`, with `S² = 0` mapped to zero.
#[inline]
pub fn shrink_factor(block_energy: f64, block_len: usize, sigma2: f64, lambda_star: f64) -> f64 {
    if block_energy <= 0.0 {
        return 0.0;
    }
    (1.0 - lambda_star * block_len as f64 * sigma2 / block_energy).max(0.0)
}

/// Applies the block James–Stein rule to detail levels `j0..=jstar`, zeroes
/// the levels above `jstar`, and leaves the father coefficients untouched.
///
/// Levels shorter than `block_len` form a single block.
pub fn threshold_blocks(
    p: &WaveletPyramid,
    sigma2: f64,
    block_len: usize,
    lambda_star: f64,
    jstar: usize,
) -> Result<WaveletPyramid> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::invalid("sigma2", format!("must be nonnegative, got {sigma2}")));
    }
    if block_len == 0 {
        return Err(Error::invalid("block_len", "must be at least 1"));
    }
    if jstar < p.j0 || jstar >= p.levels {
        return Err(Error::LevelOutOfRange {
            level: jstar,
            constraint: format!("{} <= J* <= {}", p.j0, p.levels - 1),
        });
    }
    let mut out = p.clone();
    for (i, level) in out.details.iter_mut().enumerate() {
        let j = p.j0 + i;
        if j > jstar {
            level.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        let len = block_len.min(level.len());
        if level.len() % len != 0 {
            return Err(Error::invalid(
                "block_len",
                format!("{block_len} does not divide level {j} of length {}", level.len()),
            ));
        }
        for block in level.chunks_exact_mut(len) {
            let energy: f64 = block.iter().map(|v| v * v).sum();
            let factor = shrink_factor(energy, len, sigma2, lambda_star);
            block.iter_mut().for_each(|v| *v *= factor);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseResult {
    /// Estimate of `f(i / T)`, `i = 1..=T`.
    pub fitted: Vec<f64>,
    pub medians: MedianSeries,
    pub pyramid_before: WaveletPyramid,
    pub pyramid_after: WaveletPyramid,
    pub sigma2_used: f64,
    pub plan: BinPlan,
    pub block_len: usize,
    pub jstar: usize,
}

/// Bin, take medians, transform, threshold blockwise, and synthesize.
pub fn denoise(y: &[f64], cfg: &EstimatorConfig) -> Result<DenoiseResult> {
    let plan = plan_bins(y.len(), cfg.m_target)?;
    let medians = bin_medians(y, &plan)?;
    let sigma2 = cfg.sigma2(&medians)?;
    let before = forward(&medians.medians, &cfg.filter, cfg.j0)?;
    let block_len = cfg.block_len.resolve(plan.usable_n)?;
    let jstar = cfg.level_cutoff.resolve(&plan, cfg.j0);
    let after = threshold_blocks(&before, sigma2, block_len, cfg.lambda_star, jstar)?;
    let fitted = synthesize_function(&after, &cfg.filter, plan.t)?;
    Ok(DenoiseResult {
        fitted,
        medians,
        pyramid_before: before,
        pyramid_after: after,
        sigma2_used: sigma2,
        plan,
        block_len,
        jstar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseModel;
    use crate::rng::stream_rng;
    use crate::signals::Signal;
    use proptest::prelude::*;

    #[test]
    fn lambda_star_root() {
        let l = solve_lambda_star();
        assert!((l - 4.50524).abs() < 1e-4, "{l}");
        assert!((l - l.ln() - 3.0).abs() < 1e-12);
        // the other root sits below one
        let g = |x: f64| x - x.ln() - 3.0;
        assert!(g(0.05) > 0.0 && g(1.0) < 0.0);
        assert!(l > 1.0);
    }

    #[test]
    fn hand_computed_block() {
        let p = WaveletPyramid {
            father: vec![7.0, -1.0],
            details: vec![vec![3.0, 4.0]],
            j0: 1,
            levels: 2,
            scale_factor: 0.5,
        };
        let out = threshold_blocks(&p, 1.0, 2, 4.50524, 1).unwrap();
        let factor: f64 = 1.0 - 9.01048 / 25.0;
        assert!((factor - 0.639_580_8).abs() < 1e-7);
        assert!((out.details[0][0] - 1.918_742_4).abs() < 1e-6);
        assert!((out.details[0][1] - 2.558_323_2).abs() < 1e-6);
        assert_eq!(out.father, p.father);
    }

    #[test]
    fn small_blocks_are_killed_and_zero_sigma_passes_through() {
        let p = WaveletPyramid {
            father: vec![1.0, 2.0],
            details: vec![vec![0.1, -0.1], vec![5.0, 0.0, 0.0, 0.0]],
            j0: 1,
            levels: 3,
            scale_factor: 1.0,
        };
        let out = threshold_blocks(&p, 0.01, 2, 4.5, 2).unwrap();
        assert_eq!(out.details[0], vec![0.0, 0.0]);
        let same = threshold_blocks(&p, 0.0, 2, 4.5, 2).unwrap();
        assert_eq!(same, p);
        // levels above J* are zeroed
        let cut = threshold_blocks(&p, 0.0, 2, 4.5, 1).unwrap();
        assert_eq!(cut.details[1], vec![0.0; 4]);
    }

    #[test]
    fn threshold_errors() {
        let p = WaveletPyramid::zeros(4, 1).unwrap();
        assert!(threshold_blocks(&p, -1.0, 2, 4.5, 3).is_err());
        assert!(threshold_blocks(&p, f64::NAN, 2, 4.5, 3).is_err());
        assert!(threshold_blocks(&p, 1.0, 3, 4.5, 3).is_err());
        assert!(threshold_blocks(&p, 1.0, 2, 4.5, 4).is_err());
        assert!(threshold_blocks(&p, 1.0, 2, 4.5, 0).is_err());
    }

    #[test]
    fn option_strings_round_trip() {
        for s in ["auto", "4"] {
            assert_eq!(s.parse::<BlockLength>().unwrap().to_string(), s);
        }
        for s in ["all", "log:1", "log:0.5"] {
            assert_eq!(s.parse::<LevelCutoff>().unwrap().to_string(), s);
        }
        for s in ["calibrated", "literal", "known:0.25"] {
            assert_eq!(s.parse::<SigmaRule>().unwrap().to_string(), s);
        }
        assert_eq!("log".parse::<LevelCutoff>().unwrap(), LevelCutoff::LogPower { b: 1.0 });
        for bad in ["0", "x"] {
            assert!(bad.parse::<BlockLength>().is_err());
        }
        assert!("log:-1".parse::<LevelCutoff>().is_err());
        assert!("known:-1".parse::<SigmaRule>().is_err());
        assert!("oracle".parse::<SigmaRule>().is_err());
    }

    #[test]
    fn block_length_rule() {
        assert_eq!(BlockLength::AutoLog.resolve(4096).unwrap(), 8);
        assert_eq!(BlockLength::AutoLog.resolve(1024).unwrap(), 4);
        assert_eq!(BlockLength::AutoLog.resolve(65536).unwrap(), 8);
        assert_eq!(BlockLength::AutoLog.resolve(2).unwrap(), 1);
        assert!(BlockLength::Fixed(0).resolve(10).is_err());
    }

    #[test]
    fn level_cutoff_rule() {
        let plan = plan_bins(65536, 8).unwrap();
        assert_eq!(LevelCutoff::AllLevels.resolve(&plan, 3), 12);
        // T = 8192, ln^2(65536) = 122.98 → ⌊log2 66.6⌋ = 6
        assert_eq!(LevelCutoff::LogPower { b: 1.0 }.resolve(&plan, 3), 6);
        let small = plan_bins(4096, 8).unwrap();
        assert_eq!(LevelCutoff::LogPower { b: 1.0 }.resolve(&small, 3), 3);
    }

    #[test]
    fn zeros_denoise_to_zeros() {
        let r = denoise(&[0.0; 4096], &EstimatorConfig::default()).unwrap();
        assert_eq!(r.fitted.len(), 512);
        assert!(r.fitted.iter().all(|&v| v == 0.0));
        assert_eq!(r.sigma2_used, 0.0);
    }

    #[test]
    fn noiseless_sine_error_shrinks_with_n() {
        let sig = Signal::Sine { freq: 1.0 };
        let cfg = EstimatorConfig { sigma_rule: SigmaRule::Known(0.0), ..Default::default() };
        let mise = |n: usize| {
            let y = sig.sample(n).unwrap().values;
            let r = denoise(&y, &cfg).unwrap();
            let t = r.plan.t;
            r.fitted
                .iter()
                .enumerate()
                .map(|(i, v)| (v - sig.eval((i + 1) as f64 / t as f64)).powi(2))
                .sum::<f64>()
                / t as f64
        };
        let (a, b) = (mise(1024), mise(4096));
        assert!(b < a, "{a} -> {b}");
        assert!(b < 1e-3);
    }

    fn noisy(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        let mut e = vec![0.0; n];
        NoiseModel::student_t(3.0, 1.0).unwrap().fill(&mut rng, &mut e);
        let f = Signal::Bumps.sample(n).unwrap().values;
        f.iter().zip(&e).map(|(a, b)| a + b).collect()
    }

    #[test]
    fn fitted_is_synthesis_of_thresholded_pyramid() {
        let cfg = EstimatorConfig::default();
        let r = denoise(&noisy(2048, 4), &cfg).unwrap();
        let again = synthesize_function(&r.pyramid_after, &cfg.filter, r.plan.t).unwrap();
        assert_eq!(r.fitted, again);
    }

    #[test]
    fn shift_equivariance() {
        let y = noisy(2048, 8);
        let cfg = EstimatorConfig::default();
        let base = denoise(&y, &cfg).unwrap();
        let c = 3.25;
        let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
        let moved = denoise(&shifted, &cfg).unwrap();
        for (a, b) in base.fitted.iter().zip(&moved.fitted) {
            assert!((a + c - b).abs() < 1e-8);
        }
    }

    #[test]
    fn scale_equivariance_with_known_variance() {
        let y = noisy(2048, 15);
        for c in [2.0_f64, 0.25] {
            let sigma2: f64 = 1e-3;
            let base = denoise(&y, &EstimatorConfig { sigma_rule: SigmaRule::Known(sigma2), ..Default::default() }).unwrap();
            let scaled: Vec<f64> = y.iter().map(|v| v * c).collect();
            let cfg = EstimatorConfig { sigma_rule: SigmaRule::Known(c * c * sigma2), ..Default::default() };
            let out = denoise(&scaled, &cfg).unwrap();
            for (a, b) in base.fitted.iter().zip(&out.fitted) {
                assert_eq!(a * c, *b);
            }
        }
    }

    proptest! {
        #[test]
        fn shrinkage_never_adds_block_energy(
            coeffs in prop::collection::vec(-5.0f64..5.0, 64),
            sigma2 in 0.0f64..2.0,
        ) {
            let mut p = WaveletPyramid::zeros(6, 2).unwrap();
            let mut it = coeffs.iter().copied();
            for v in p.father.iter_mut().chain(p.details.iter_mut().flatten()) {
                *v = it.next().unwrap();
            }
            let out = threshold_blocks(&p, sigma2, 4, solve_lambda_star(), 5).unwrap();
            for (before, after) in p.details.iter().zip(&out.details) {
                for (b, a) in before.chunks(4).zip(after.chunks(4)) {
                    let eb: f64 = b.iter().map(|v| v * v).sum();
                    let ea: f64 = a.iter().map(|v| v * v).sum();
                    prop_assert!(ea <= eb);
                }
            }
        }

        #[test]
        fn shrink_factor_monotone_in_sigma(energy in 0.0f64..50.0, s1 in 0.0f64..3.0, ds in 0.0f64..3.0) {
            let l = solve_lambda_star();
            prop_assert!(shrink_factor(energy, 4, s1 + ds, l) <= shrink_factor(energy, 4, s1, l));
        }
    }
}
