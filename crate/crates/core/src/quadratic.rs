//! Estimation of the energy `Q(f) = ∫ f²` from bin medians.

use crate::binning::{bin_medians, plan_bins};
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::rng::replicate_map;
use crate::shrinkage::EstimatorConfig;
use crate::signals::Signal;
use crate::stats::mean_stderr;
use crate::wavelet::forward;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticResult {
    /// Signed; may be negative for very small signals.
    pub q_hat: f64,
    pub jq: usize,
    pub sigma2_used: f64,
    /// `2^{jq + 1}`: father coefficients plus levels `j0..=jq`.
    pub terms_count: usize,
}

/// `Σ (y² - σ̂²)` over the father coefficients and the detail levels
/// `j0..=jq`, with `jq = ⌊log2 √usable_n⌋`.
pub fn estimate_quadratic(y: &[f64], cfg: &EstimatorConfig) -> Result<QuadraticResult> {
    let plan = plan_bins(y.len(), cfg.m_target)?;
    let jq = plan.usable_n.ilog2() as usize / 2;
    if jq < cfg.j0 || jq >= plan.levels {
        return Err(Error::LevelOutOfRange {
            level: jq,
            constraint: format!("{} <= jq <= {} (n = {})", cfg.j0, plan.levels.saturating_sub(1), y.len()),
        });
    }
    let medians = bin_medians(y, &plan)?;
    let sigma2 = cfg.sigma2(&medians)?;
    let pyr = forward(&medians.medians, &cfg.filter, cfg.j0)?;
    let retained = pyr.father.iter().chain(pyr.details[..=jq - cfg.j0].iter().flatten());
    let mut q_hat = 0.0;
    let mut terms_count = 0;
    for &c in retained {
        q_hat += c * c - sigma2;
        terms_count += 1;
    }
    Ok(QuadraticResult {
        q_hat,
        jq,
        sigma2_used: sigma2,
        terms_count,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticRiskRow {
    pub n: usize,
    pub reps: usize,
    pub q_true: f64,
    pub mean_qhat: f64,
    /// `n · mean((q̂ - Q)²)`.
    pub n_mse: f64,
    /// Monte Carlo standard error of `n_mse`.
    pub stderr: f64,
}

/// Scaled mean squared error of [`estimate_quadratic`] for each `n`.
/// Replicate `r` draws its noise from stream `(seed, r)`.
pub fn quadratic_risk(
    model: &NoiseModel,
    signal: &Signal,
    n_list: &[usize],
    reps: usize,
    seed: u64,
    cfg: &EstimatorConfig,
) -> Result<Vec<QuadraticRiskRow>> {
    if reps < 100 {
        return Err(Error::invalid("reps", format!("need at least 100 replicates, got {reps}")));
    }
    let q_true = signal.energy();
    n_list
        .iter()
        .map(|&n| {
            let f = signal.sample(n)?.values;
            let estimates = replicate_map(seed, reps, |_, rng| {
                let mut y = vec![0.0; n];
                model.fill(rng, &mut y);
                y.iter_mut().zip(&f).for_each(|(v, fv)| *v += fv);
                estimate_quadratic(&y, cfg).map(|r| r.q_hat)
            })
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;
            let losses: Vec<f64> = estimates.iter().map(|q| (q - q_true).powi(2)).collect();
            let (mse, se) = mean_stderr(&losses);
            let (mean_qhat, _) = mean_stderr(&estimates);
            Ok(QuadraticRiskRow {
                n,
                reps,
                q_true,
                mean_qhat,
                n_mse: n as f64 * mse,
                stderr: n as f64 * se,
            })
        })
        .collect()
}
