//! Monte Carlo risk experiments for the robust denoiser.

use std::fmt;
use std::str::FromStr;

use crate::binning::{bin_medians, estimate_sigma2, plan_bins, VarianceConstant};
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::quadratic::estimate_quadratic;
use crate::rng::{replicate_map, StreamRng};
use crate::shrinkage::{denoise, EstimatorConfig};
use crate::signals::Signal;
use crate::stats::{linear_fit, mean_stderr, median_of};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LossMode {
    /// Mean squared error over the `T`-point bin grid.
    #[default]
    Mise,
    /// Squared error at the bin-grid point nearest `t0`.
    Pointwise { t0: f64 },
    /// Squared error of the energy estimate.
    Quadratic,
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossMode::Mise => write!(f, "mise"),
            LossMode::Pointwise { t0 } => write!(f, "pointwise:{t0}"),
            LossMode::Quadratic => write!(f, "quadratic"),
        }
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().split_once(':') {
            None if s.trim() == "mise" => Ok(LossMode::Mise),
            None if s.trim() == "quadratic" => Ok(LossMode::Quadratic),
            Some(("pointwise", t)) => {
                let t0: f64 = t
                    .parse()
                    .map_err(|_| Error::invalid("mode", format!("bad t0 in {s:?}")))?;
                if !(0.0..=1.0).contains(&t0) {
                    return Err(Error::invalid("mode", format!("t0 must lie in [0, 1], got {t0}")));
                }
                Ok(LossMode::Pointwise { t0 })
            }
            _ => Err(Error::invalid("mode", format!("expected mise, quadratic or pointwise:<t0>, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub signal: Signal,
    pub noise: NoiseModel,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub estimator: EstimatorConfig,
    pub seed: u64,
    pub mode: LossMode,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::invalid("reps", "must be at least 1"));
        }
        if self.n_list.is_empty() {
            return Err(Error::invalid("n_list", "must not be empty"));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("n_list", "must be strictly increasing"));
        }
        for &n in &self.n_list {
            plan_bins(n, self.estimator.m_target)?;
        }
        Ok(())
    }

    /// `key = value` lines describing the spec, stable across runs.
    pub fn echo(&self) -> String {
        let e = &self.estimator;
        let n_list: Vec<String> = self.n_list.iter().map(|n| n.to_string()).collect();
        format!(
            "signal = {}\nnoise = {}\nn_list = {}\nreps = {}\nseed = {}\nmode = {}\nm = {}\nfilter = {}\nj0 = {}\nblock_len = {}\nlambda_star = {}\nlevel_cutoff = {}\nsigma = {}\n",
            self.signal,
            self.noise,
            n_list.join(","),
            self.reps,
            self.seed,
            self.mode,
            e.m_target,
            e.filter,
            e.j0,
            e.block_len,
            e.lambda_star,
            e.level_cutoff,
            e.sigma_rule,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskRow {
    pub n: usize,
    pub reps: usize,
    /// Mean loss over replicates.
    pub risk: f64,
    /// `sd / √reps` of the per-replicate losses.
    pub stderr: f64,
    pub median_loss: f64,
}

/// Fit and truth on the bin grid for replicate 0 at the largest `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub n: usize,
    pub grid: Vec<f64>,
    pub fitted: Vec<f64>,
    pub truth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskTable {
    pub spec: ExperimentSpec,
    pub rows: Vec<RiskRow>,
    pub overlay: Option<Overlay>,
}

impl RiskTable {
    pub fn empty(spec: ExperimentSpec) -> Self {
        Self {
            spec,
            rows: Vec::new(),
            overlay: None,
        }
    }
}

/// One noisy sample `f(i/n) + ξ_i` drawn from `rng`.
pub fn noisy_sample(f: &[f64], noise: &NoiseModel, rng: &mut StreamRng) -> Vec<f64> {
    let mut y = vec![0.0; f.len()];
    noise.fill(rng, &mut y);
    y.iter_mut().zip(f).for_each(|(v, fv)| *v += fv);
    y
}

fn bin_grid(t: usize) -> Vec<f64> {
    (1..=t).map(|i| i as f64 / t as f64).collect()
}

fn mise(fitted: &[f64], signal: &Signal) -> f64 {
    let t = fitted.len() as f64;
    fitted
        .iter()
        .enumerate()
        .map(|(i, v)| (v - signal.eval((i + 1) as f64 / t)).powi(2))
        .sum::<f64>()
        / t
}

/// Nearest grid index to `t0` on `i / t`, `i = 1..=t`.
fn snap(t0: f64, t: usize) -> usize {
    ((t0 * t as f64).round() as usize).clamp(1, t) - 1
}

/// Runs every replicate of every `n`. Replicate `r` uses stream `(seed, r)`,
/// so the table is identical for any thread count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RiskTable> {
    spec.validate()?;
    let q_true = spec.signal.energy();
    let mut rows = Vec::with_capacity(spec.n_list.len());
    for &n in &spec.n_list {
        let f = spec.signal.sample(n)?.values;
        let losses = replicate_map(spec.seed, spec.reps, |_, rng| {
            let y = noisy_sample(&f, &spec.noise, rng);
            match spec.mode {
                LossMode::Mise => denoise(&y, &spec.estimator).map(|r| mise(&r.fitted, &spec.signal)),
                LossMode::Pointwise { t0 } => denoise(&y, &spec.estimator).map(|r| {
                    let i = snap(t0, r.plan.t);
                    let t = (i + 1) as f64 / r.plan.t as f64;
                    (r.fitted[i] - spec.signal.eval(t)).powi(2)
                }),
                LossMode::Quadratic => estimate_quadratic(&y, &spec.estimator).map(|r| (r.q_hat - q_true).powi(2)),
            }
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        let (risk, stderr) = mean_stderr(&losses);
        rows.push(RiskRow {
            n,
            reps: spec.reps,
            risk,
            stderr,
            median_loss: median_of(&losses),
        });
    }
    let overlay = match spec.mode {
        LossMode::Quadratic => None,
        _ => {
            let n = *spec.n_list.last().expect("validated");
            let f = spec.signal.sample(n)?.values;
            let y = noisy_sample(&f, &spec.noise, &mut crate::rng::stream_rng(spec.seed, 0));
            let fit = denoise(&y, &spec.estimator)?;
            let grid = bin_grid(fit.plan.t);
            let truth = grid.iter().map(|&t| spec.signal.eval(t)).collect();
            Some(Overlay {
                n,
                grid,
                fitted: fit.fitted,
                truth,
            })
        }
    };
    Ok(RiskTable {
        spec: spec.clone(),
        rows,
        overlay,
    })
}

/// Least-squares slope of `ln risk` on `ln n`, with its `r²`.
pub fn fit_rate_slope(table: &RiskTable) -> Result<(f64, f64)> {
    if table.rows.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: table.rows.len(),
        });
    }
    if let Some(bad) = table.rows.iter().find(|r| !(r.risk > 0.0) || !r.risk.is_finite()) {
        return Err(Error::NonPositiveRisk {
            n: bad.n,
            risk: bad.risk,
        });
    }
    let x: Vec<f64> = table.rows.iter().map(|r| (r.n as f64).ln()).collect();
    let y: Vec<f64> = table.rows.iter().map(|r| r.risk.ln()).collect();
    let (slope, _, r2) = linear_fit(&x, &y);
    Ok((slope, r2))
}

/// Spread of the `h(0)^{-2}` estimate over pure-noise replicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationReport {
    pub n: usize,
    pub m: usize,
    pub reps: usize,
    pub constant: VarianceConstant,
    pub median_h_inv_sq: f64,
    pub mean_h_inv_sq: f64,
    /// `1 / h(0)²` for the calibrated constant, `2 / h(0)²` for the literal one.
    pub target: f64,
}

impl CalibrationReport {
    pub fn relative_error(&self) -> f64 {
        (self.median_h_inv_sq - self.target).abs() / self.target
    }
}

/// Runs the pair-difference estimator on `reps` samples of pure noise.
pub fn variance_calibration(
    noise: &NoiseModel,
    n: usize,
    m: usize,
    reps: usize,
    seed: u64,
    constant: VarianceConstant,
) -> Result<CalibrationReport> {
    if reps == 0 {
        return Err(Error::invalid("reps", "must be at least 1"));
    }
    let plan = plan_bins(n, m)?;
    let estimates = replicate_map(seed, reps, |_, rng| {
        let mut y = vec![0.0; n];
        noise.fill(rng, &mut y);
        let med = bin_medians(&y, &plan)?;
        estimate_sigma2(&med, constant).map(|e| e.h_inv_sq)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let h0 = noise.density_at_zero();
    let target = match constant {
        VarianceConstant::Calibrated => 1.0,
        VarianceConstant::PaperLiteral => 2.0,
    } / (h0 * h0);
    Ok(CalibrationReport {
        n,
        m: plan.m,
        reps,
        constant,
        median_h_inv_sq: median_of(&estimates),
        mean_h_inv_sq: mean_stderr(&estimates).0,
        target,
    })
}
