//! Robust nonparametric regression under unknown symmetric noise: bin the
//! observations, take bin medians, and denoise the medians with a block
//! James–Stein wavelet estimator. Also estimates the signal energy and checks
//! numerically how closely a bin median couples to a normal variable.

pub mod binning;
pub mod coupling;
pub mod error;
pub mod harness;
pub mod noise;
pub mod quadratic;
pub mod report;
pub mod rng;
pub mod shrinkage;
pub mod signals;
pub mod special;
pub mod stats;
pub mod wavelet;

pub use binning::{bin_medians, estimate_sigma2, plan_bins, BinPlan, MedianSeries, SigmaEstimate, VarianceConstant};
pub use coupling::{coupling_error_profile, kmt_binomial_coupling_check, CouplingRow, KmtRow, MedianLaw};
pub use error::{Error, Result};
pub use harness::{fit_rate_slope, run_experiment, ExperimentSpec, LossMode, RiskRow, RiskTable};
pub use noise::{density_at_zero, family_membership, sample_noise, FamilyTolerances, NoiseModel};
pub use quadratic::{estimate_quadratic, quadratic_risk, QuadraticResult, QuadraticRiskRow};
pub use report::emit_report;
pub use shrinkage::{
    denoise, solve_lambda_star, threshold_blocks, BlockLength, DenoiseResult, EstimatorConfig, LevelCutoff, SigmaRule,
};
pub use signals::{load_series_csv, sample_signal, Signal, SignalGrid};
pub use wavelet::{forward, inverse, synthesize_function, WaveletFilter, WaveletPyramid};
