//! Symmetric error distributions.
//!
//! A [`NoiseModel`] bundles a family with an optional location shift. Shifted
//! models exist only so the membership diagnostics have something to reject;
//! the estimators assume the median is zero.
//!
//! There is deliberately no mean routine here: Cauchy and Student-t with one
//! degree of freedom have none, and nothing downstream may rely on it.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StudentT};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::special::{
    betainc, betainc_inv, integrate, integrate_real_line, ln_gamma, norm_cdf, norm_pdf, norm_ppf,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseFamily {
    Gaussian { scale: f64 },
    Cauchy { scale: f64 },
    StudentT { dof: f64, scale: f64 },
    Laplace { scale: f64 },
    /// Uniform on `[-halfwidth, halfwidth]`; `halfwidth = 0` is the point mass at zero.
    Uniform { halfwidth: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    family: NoiseFamily,
    location: f64,
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {v}")))
    }
}

impl NoiseModel {
    pub fn gaussian(scale: f64) -> Result<Self> {
        Ok(Self::from_family(NoiseFamily::Gaussian {
            scale: positive("scale", scale)?,
        }))
    }

    pub fn cauchy(scale: f64) -> Result<Self> {
        Ok(Self::from_family(NoiseFamily::Cauchy {
            scale: positive("scale", scale)?,
        }))
    }

    pub fn student_t(dof: f64, scale: f64) -> Result<Self> {
        Ok(Self::from_family(NoiseFamily::StudentT {
            dof: positive("dof", dof)?,
            scale: positive("scale", scale)?,
        }))
    }

    pub fn laplace(scale: f64) -> Result<Self> {
        Ok(Self::from_family(NoiseFamily::Laplace {
            scale: positive("scale", scale)?,
        }))
    }

    pub fn uniform(halfwidth: f64) -> Result<Self> {
        if !(halfwidth.is_finite() && halfwidth >= 0.0) {
            return Err(Error::invalid("halfwidth", format!("must be nonnegative, got {halfwidth}")));
        }
        Ok(Self::from_family(NoiseFamily::Uniform { halfwidth }))
    }

    fn from_family(family: NoiseFamily) -> Self {
        Self {
            family,
            location: 0.0,
        }
    }

    /// The same law translated by `delta`. Breaks the median-zero condition.
    pub fn shifted(self, delta: f64) -> Self {
        Self {
            location: self.location + delta,
            ..self
        }
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    /// True for the point mass (`uniform:0`), which has no density.
    pub fn is_degenerate(&self) -> bool {
        matches!(self.family, NoiseFamily::Uniform { halfwidth } if halfwidth == 0.0)
    }

    fn scale(&self) -> f64 {
        match self.family {
            NoiseFamily::Gaussian { scale }
            | NoiseFamily::Cauchy { scale }
            | NoiseFamily::StudentT { scale, .. }
            | NoiseFamily::Laplace { scale } => scale,
            NoiseFamily::Uniform { halfwidth } => halfwidth,
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        let s = self.scale();
        let u = (x - self.location) / s;
        match self.family {
            NoiseFamily::Gaussian { .. } => norm_pdf(u) / s,
            NoiseFamily::Cauchy { .. } => 1.0 / (PI * s * (1.0 + u * u)),
            NoiseFamily::StudentT { dof, .. } => t_pdf(dof, u) / s,
            NoiseFamily::Laplace { .. } => (-u.abs()).exp() / (2.0 * s),
            NoiseFamily::Uniform { halfwidth } => {
                if halfwidth == 0.0 {
                    if x == self.location {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                } else if u.abs() <= 1.0 {
                    0.5 / halfwidth
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let s = self.scale();
        if s == 0.0 {
            return if x >= self.location { 1.0 } else { 0.0 };
        }
        std_cdf(self.family, (x - self.location) / s)
    }

    /// `1 - cdf(x)` without cancellation in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        let s = self.scale();
        if s == 0.0 {
            return if x >= self.location { 0.0 } else { 1.0 };
        }
        std_cdf(self.family, (self.location - x) / s)
    }

    /// `H^{-1}(p)`.
    pub fn quantile(&self, p: f64) -> f64 {
        self.location + self.scale() * std_quantile(self.family, p)
    }

    /// `H^{-1}(1 - q)`, accurate when `q` is tiny.
    pub fn quantile_upper(&self, q: f64) -> f64 {
        self.location - self.scale() * std_quantile(self.family, q)
    }

    /// `h(0)` in closed form. Infinite for the point mass.
    pub fn density_at_zero(&self) -> f64 {
        self.density(0.0)
    }

    /// Fills `out` with i.i.d. draws.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let loc = self.location;
        match self.family {
            NoiseFamily::Gaussian { scale } => {
                for v in out.iter_mut() {
                    let z: f64 = rand_distr::StandardNormal.sample(rng);
                    *v = loc + scale * z;
                }
            }
            NoiseFamily::Cauchy { scale } => {
                // inverse CDF; the open interval keeps tan finite
                for v in out.iter_mut() {
                    let u: f64 = rng.random::<f64>();
                    *v = loc + scale * (PI * (u - 0.5)).tan();
                }
            }
            NoiseFamily::StudentT { dof, scale } => {
                let dist = StudentT::new(dof).expect("dof validated at construction");
                for v in out.iter_mut() {
                    *v = loc + scale * dist.sample(rng);
                }
            }
            NoiseFamily::Laplace { scale } => {
                for v in out.iter_mut() {
                    let u = rng.random::<f64>() - 0.5;
                    *v = loc - scale * u.signum() * (-2.0 * u.abs()).ln_1p();
                }
            }
            NoiseFamily::Uniform { halfwidth } => {
                if halfwidth == 0.0 {
                    out.iter_mut().for_each(|v| *v = loc);
                } else {
                    for v in out.iter_mut() {
                        *v = loc + halfwidth * (2.0 * rng.random::<f64>() - 1.0);
                    }
                }
            }
        }
    }
}

fn t_pdf(dof: f64, u: f64) -> f64 {
    let ln_c = ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof) - 0.5 * (dof * PI).ln();
    (ln_c - 0.5 * (dof + 1.0) * (u * u / dof).ln_1p()).exp()
}

fn std_cdf(family: NoiseFamily, u: f64) -> f64 {
    match family {
        NoiseFamily::Gaussian { .. } => norm_cdf(u),
        NoiseFamily::Cauchy { .. } => {
            if u < 0.0 {
                (-1.0 / u).atan() / PI
            } else {
                0.5 + u.atan() / PI
            }
        }
        NoiseFamily::StudentT { dof, .. } => {
            let u2 = u * u;
            if u2 < dof {
                let central = betainc(0.5, 0.5 * dof, u2 / (dof + u2));
                0.5 + 0.5 * u.signum() * central
            } else {
                let tail = 0.5 * betainc(0.5 * dof, 0.5, dof / (dof + u2));
                if u < 0.0 {
                    tail
                } else {
                    1.0 - tail
                }
            }
        }
        NoiseFamily::Laplace { .. } => {
            if u < 0.0 {
                0.5 * u.exp()
            } else {
                1.0 - 0.5 * (-u).exp()
            }
        }
        NoiseFamily::Uniform { .. } => (0.5 * (u + 1.0)).clamp(0.0, 1.0),
    }
}

/// Standardized quantile; symmetric families only need the lower half.
fn std_quantile(family: NoiseFamily, p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p > 0.5 {
        return -std_quantile(family, 1.0 - p);
    }
    if p == 0.5 {
        return 0.0;
    }
    match family {
        NoiseFamily::Gaussian { .. } => norm_ppf(p),
        NoiseFamily::Cauchy { .. } => {
            if p == 0.0 {
                f64::NEG_INFINITY
            } else {
                -1.0 / (PI * p).tan()
            }
        }
        NoiseFamily::StudentT { dof, .. } => t_lower_quantile(dof, p),
        NoiseFamily::Laplace { .. } => (2.0 * p).ln(),
        NoiseFamily::Uniform { .. } => 2.0 * p - 1.0,
    }
}

fn t_lower_quantile(dof: f64, p: f64) -> f64 {
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    if dof == 1.0 {
        return -1.0 / (PI * p).tan();
    }
    if dof == 2.0 {
        return (2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt();
    }
    if p < 0.25 {
        let x = betainc_inv(0.5 * dof, 0.5, 2.0 * p);
        -(dof * (1.0 / x - 1.0)).sqrt()
    } else {
        let y = betainc_inv(0.5, 0.5 * dof, 1.0 - 2.0 * p);
        -(dof * y / (1.0 - y)).sqrt()
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    /// Parses `gaussian:1.0`, `cauchy:1.0`, `t:2:1.0`, `laplace:1.0`, `uniform:1.0`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::ParseNoise(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(bad)?
                .trim()
                .parse::<f64>()
                .map_err(|_| bad())
        };
        let model = match (parts[0].to_ascii_lowercase().as_str(), parts.len()) {
            ("gaussian", 2) => NoiseModel::gaussian(num(1)?),
            ("cauchy", 2) => NoiseModel::cauchy(num(1)?),
            ("t", 3) => NoiseModel::student_t(num(1)?, num(2)?),
            ("laplace", 2) => NoiseModel::laplace(num(1)?),
            ("uniform", 2) => NoiseModel::uniform(num(1)?),
            _ => return Err(bad()),
        };
        model.map_err(|_| bad())
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            NoiseFamily::Gaussian { scale } => write!(f, "gaussian:{scale}")?,
            NoiseFamily::Cauchy { scale } => write!(f, "cauchy:{scale}")?,
            NoiseFamily::StudentT { dof, scale } => write!(f, "t:{dof}:{scale}")?,
            NoiseFamily::Laplace { scale } => write!(f, "laplace:{scale}")?,
            NoiseFamily::Uniform { halfwidth } => write!(f, "uniform:{halfwidth}")?,
        }
        if self.location != 0.0 {
            write!(f, "@{}", self.location)?;
        }
        Ok(())
    }
}

/// `count` i.i.d. draws from `model`; the same `(model, count, seed)` always
/// yields the same vector.
pub fn sample_noise(model: &NoiseModel, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0);
    let mut out = vec![0.0; count];
    model.fill(&mut rng, &mut out);
    out
}

/// Closed-form `h(0)`.
pub fn density_at_zero(model: &NoiseModel) -> f64 {
    model.density_at_zero()
}

/// Tolerance parameters of the error family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyTolerances {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
}

impl Default for FamilyTolerances {
    fn default() -> Self {
        Self {
            eps1: 0.1,
            eps2: 0.5,
            eps3: 0.5,
            eps4: 10.0,
        }
    }
}

/// Outcome of one membership condition. `margin >= 0` iff the condition holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionCheck {
    pub passed: bool,
    pub margin: f64,
}

impl ConditionCheck {
    fn from_margin(margin: f64) -> Self {
        Self {
            passed: margin >= 0.0,
            margin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MembershipReport {
    pub median_zero: ConditionCheck,
    pub density_at_zero_bounds: ConditionCheck,
    pub local_quadratic: ConditionCheck,
    pub fractional_moment: ConditionCheck,
    /// The value of `∫ |x|^eps3 h(x) dx`.
    pub fractional_moment_value: f64,
    pub symmetry: ConditionCheck,
    pub third_derivative: ConditionCheck,
}

impl MembershipReport {
    pub fn all_pass(&self) -> bool {
        [
            self.median_zero,
            self.density_at_zero_bounds,
            self.local_quadratic,
            self.fractional_moment,
            self.symmetry,
            self.third_derivative,
        ]
        .iter()
        .all(|c| c.passed)
    }
}

const MEMBERSHIP_GRID: usize = 2000;
const FD_STEP: f64 = 1e-4;

/// Numerically checks each defining condition of the error family.
pub fn family_membership(model: &NoiseModel, tol: FamilyTolerances) -> Result<MembershipReport> {
    let FamilyTolerances { eps1, eps2, eps3, eps4 } = tol;
    if !(eps1 > 0.0 && eps1 < 1.0) {
        return Err(Error::invalid("eps1", format!("must lie in (0, 1), got {eps1}")));
    }
    positive("eps2", eps2)?;
    positive("eps3", eps3)?;
    positive("eps4", eps4)?;
    if model.is_degenerate() {
        return Err(Error::invalid("model", "point mass has no density"));
    }

    let h = |x: f64| model.density(x);
    let h0 = h(0.0);

    let median_zero = ConditionCheck::from_margin(1e-12 - (model.cdf(0.0) - 0.5).abs());
    let density_at_zero_bounds = ConditionCheck::from_margin((h0 - eps1).min(1.0 / eps1 - h0));

    let step = 2.0 * eps2 / MEMBERSHIP_GRID as f64;
    let local_margin = (0..MEMBERSHIP_GRID)
        .map(|i| {
            let x = -eps2 + (i as f64 + 0.5) * step;
            x * x / eps1 - (h(x) - h0).abs()
        })
        .fold(f64::INFINITY, f64::min);
    let local_quadratic = ConditionCheck::from_margin(local_margin);

    let moment_integrand = |x: f64| x.abs().powf(eps3) * h(x);
    let fractional_moment_value = match model.family {
        NoiseFamily::Uniform { halfwidth } => integrate(
            moment_integrand,
            model.location - halfwidth,
            model.location + halfwidth,
            1e-12,
            1e-10,
        ),
        _ => integrate_real_line(moment_integrand, 0.0, 1e-10, 1e-10),
    };
    let fractional_moment = ConditionCheck::from_margin(eps4 - fractional_moment_value);

    let reach = model.quantile_upper(1e-3).abs().max(1.0);
    let sym_dev = (0..=MEMBERSHIP_GRID)
        .map(|i| {
            let x = reach * i as f64 / MEMBERSHIP_GRID as f64;
            (h(x) - h(-x)).abs()
        })
        .fold(0.0, f64::max);
    let symmetry = ConditionCheck::from_margin(1e-12 * h0.max(1.0) - sym_dev);

    let third = |x: f64| {
        (h(x + 2.0 * FD_STEP) - 2.0 * h(x + FD_STEP) + 2.0 * h(x - FD_STEP) - h(x - 2.0 * FD_STEP))
            / (2.0 * FD_STEP.powi(3))
    };
    let max_third = (0..=MEMBERSHIP_GRID / 2)
        .map(|i| {
            let x = -eps3 + 2.0 * eps3 * i as f64 / (MEMBERSHIP_GRID / 2) as f64;
            third(x).abs()
        })
        .fold(0.0, f64::max);
    let third_derivative = ConditionCheck::from_margin(eps4 - max_third);

    Ok(MembershipReport {
        median_zero,
        density_at_zero_bounds,
        local_quadratic,
        fractional_moment,
        fractional_moment_value,
        symmetry,
        third_derivative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::integrate_real_line;

    fn families() -> Vec<NoiseModel> {
        vec![
            NoiseModel::gaussian(1.0).unwrap(),
            NoiseModel::gaussian(2.5).unwrap(),
            NoiseModel::cauchy(1.0).unwrap(),
            NoiseModel::student_t(2.0, 1.0).unwrap(),
            NoiseModel::student_t(3.0, 1.0).unwrap(),
            NoiseModel::student_t(5.5, 0.7).unwrap(),
            NoiseModel::laplace(1.0).unwrap(),
            NoiseModel::uniform(1.0).unwrap(),
        ]
    }

    #[test]
    fn parse_and_display() {
        let m: NoiseModel = "t:2:1.0".parse().unwrap();
        assert_eq!(m, NoiseModel::student_t(2.0, 1.0).unwrap());
        for s in ["gaussian:1.5", "cauchy:1", "laplace:0.25", "uniform:0", "t:3:2"] {
            let m: NoiseModel = s.parse().unwrap();
            let again: NoiseModel = m.to_string().parse().unwrap();
            assert_eq!(m, again);
        }
        for s in ["gauss:1", "t:2", "cauchy:-1", "gaussian:x", "", "uniform:-1"] {
            assert!(s.parse::<NoiseModel>().is_err(), "{s}");
        }
    }

    #[test]
    fn density_at_zero_closed_forms() {
        let g = NoiseModel::gaussian(1.0).unwrap().density_at_zero();
        assert!((g - 0.398_942_280_401_432_7).abs() < 1e-15);
        let c = NoiseModel::cauchy(1.0).unwrap().density_at_zero();
        assert!((c - 1.0 / PI).abs() < 1e-15);
        let t = NoiseModel::student_t(2.0, 1.0).unwrap().density_at_zero();
        assert!((t - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-14);
        let l = NoiseModel::laplace(2.0).unwrap().density_at_zero();
        assert!((l - 0.25).abs() < 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf_over_central_range() {
        for m in families() {
            for i in 0..=200 {
                let p = 0.005 + 0.99 * i as f64 / 200.0;
                let x = m.quantile(p);
                assert!((m.cdf(x) - p).abs() < 1e-12, "{m} p={p}");
                let back = m.quantile(m.cdf(x));
                assert!((back - x).abs() < 1e-9, "{m} x={x} back={back}");
            }
        }
    }

    #[test]
    fn symmetry_and_median_zero() {
        for m in families() {
            assert!((m.cdf(0.0) - 0.5).abs() < 1e-12, "{m}");
            for i in 0..100 {
                let x = 0.037 * i as f64;
                assert!((m.density(x) - m.density(-x)).abs() < 1e-12, "{m}");
                assert!((m.sf(x) - m.cdf(-x)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        for m in families() {
            let total = match m.family() {
                NoiseFamily::Uniform { halfwidth } => {
                    integrate(|x| m.density(x), -halfwidth, halfwidth, 1e-13, 1e-13)
                }
                _ => integrate_real_line(|x| m.density(x), 0.0, 1e-11, 1e-11),
            };
            assert!((total - 1.0).abs() < 1e-6, "{m}: {total}");
        }
    }

    #[test]
    fn cdf_is_nondecreasing() {
        for m in families() {
            let mut prev = 0.0;
            for i in 0..=4000 {
                let x = -20.0 + 0.01 * i as f64;
                let c = m.cdf(x);
                assert!(c >= prev, "{m} at {x}");
                prev = c;
            }
        }
    }

    #[test]
    fn degenerate_uniform_samples_zero() {
        let m = NoiseModel::uniform(0.0).unwrap();
        assert!(sample_noise(&m, 17, 3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampling_is_reproducible() {
        let m = NoiseModel::student_t(3.0, 1.0).unwrap();
        assert_eq!(sample_noise(&m, 50, 11), sample_noise(&m, 50, 11));
        assert_ne!(sample_noise(&m, 50, 11), sample_noise(&m, 50, 12));
    }

    #[test]
    fn gaussian_sample_mean_is_near_zero() {
        // CLT: sd of the mean is 1e-3, so 4e-3 is a four-sigma band
        let xs = sample_noise(&NoiseModel::gaussian(1.0).unwrap(), 1_000_000, 2024);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 4e-3, "{mean}");
    }

    #[test]
    fn cauchy_sign_balance() {
        let xs = sample_noise(&NoiseModel::cauchy(1.0).unwrap(), 100_000, 9);
        let frac = xs.iter().filter(|&&v| v <= 0.0).count() as f64 / xs.len() as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    fn ks_to_cdf(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = cdf(x);
                (c - i as f64 / n).abs().max((c - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn samples_match_analytic_cdf() {
        for (i, m) in families().into_iter().enumerate() {
            let xs = sample_noise(&m, 100_000, 500 + i as u64);
            let d = ks_to_cdf(xs, |x| m.cdf(x));
            assert!(d < 0.01, "{m}: KS = {d}");
        }
    }

    #[test]
    fn gaussian_is_in_the_family() {
        let r = family_membership(&NoiseModel::gaussian(1.0).unwrap(), FamilyTolerances::default()).unwrap();
        assert!(r.all_pass(), "{r:?}");
    }

    #[test]
    fn cauchy_fractional_moment() {
        // ∫ |x|^{1/2} / (π(1 + x²)) dx = 1/cos(π/4) = √2
        let tol = FamilyTolerances { eps3: 0.5, eps4: 10.0, ..Default::default() };
        let r = family_membership(&NoiseModel::cauchy(1.0).unwrap(), tol).unwrap();
        assert!(r.fractional_moment.passed);
        assert!((r.fractional_moment_value - 2f64.sqrt()).abs() < 1e-6, "{}", r.fractional_moment_value);
    }

    #[test]
    fn shifted_model_fails_median_zero() {
        let m = NoiseModel::gaussian(1.0).unwrap().shifted(0.3);
        let r = family_membership(&m, FamilyTolerances::default()).unwrap();
        assert!(!r.median_zero.passed);
        assert!(!r.all_pass());
    }

    #[test]
    fn laplace_kink_fails_local_quadratic() {
        let r = family_membership(&NoiseModel::laplace(1.0).unwrap(), FamilyTolerances::default()).unwrap();
        assert!(!r.local_quadratic.passed);
    }

    #[test]
    fn membership_rejects_bad_tolerances() {
        let m = NoiseModel::gaussian(1.0).unwrap();
        for tol in [
            FamilyTolerances { eps1: 1.0, ..Default::default() },
            FamilyTolerances { eps1: 0.0, ..Default::default() },
            FamilyTolerances { eps2: -1.0, ..Default::default() },
            FamilyTolerances { eps4: 0.0, ..Default::default() },
        ] {
            assert!(family_membership(&m, tol).is_err());
        }
    }
}
