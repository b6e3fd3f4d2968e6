//! Exact law of the sample median of `m = 2k + 1` draws, its quantile
//! coupling with a standard normal, and deterministic checks of the coupling
//! error.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::special::{betainc, betainc_inv, ln_gamma, norm_cdf, norm_ppf, norm_sf};

/// Law of the median of `m = 2k + 1` i.i.d. draws from `model`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedianLaw {
    model: NoiseModel,
    m: usize,
    k: usize,
}

impl MedianLaw {
    /// Odd `m` only.
    pub fn new(model: NoiseModel, m: usize) -> Result<Self> {
        if m % 2 == 0 {
            return Err(Error::invalid("m", format!("must be odd, got {m}")));
        }
        if model.is_degenerate() {
            return Err(Error::invalid("model", "point mass has no median density"));
        }
        Ok(Self { model, m, k: m / 2 })
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn shape(&self) -> f64 {
        (self.k + 1) as f64
    }

    /// `G(x) = I_{H(x)}(k+1, k+1)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let a = self.shape();
        betainc(a, a, self.model.cdf(x))
    }

    /// `1 - G(x)`, via the symmetry of the Beta(k+1, k+1) law.
    pub fn sf(&self, x: f64) -> f64 {
        let a = self.shape();
        betainc(a, a, self.model.sf(x))
    }

    /// `g(x) = (2k+1)!/(k!)² H^k (1-H)^k h`, evaluated on the log scale.
    pub fn pdf(&self, x: f64) -> f64 {
        let h = self.model.density(x);
        if h == 0.0 {
            return 0.0;
        }
        let k = self.k as f64;
        let lower = self.model.cdf(x);
        let upper = self.model.sf(x);
        if self.k == 0 {
            return h;
        }
        if lower == 0.0 || upper == 0.0 {
            return 0.0;
        }
        let log_c = ln_gamma(2.0 * k + 2.0) - 2.0 * ln_gamma(k + 1.0);
        (log_c + k * (lower.ln() + upper.ln()) + h.ln()).exp()
    }

    /// `G^{-1}(p)`.
    pub fn quantile(&self, p: f64) -> f64 {
        let a = self.shape();
        self.model.quantile(betainc_inv(a, a, p))
    }

    /// `G^{-1}(1 - q)`, accurate for tiny `q`.
    pub fn quantile_upper(&self, q: f64) -> f64 {
        let a = self.shape();
        self.model.quantile_upper(betainc_inv(a, a, q))
    }

    /// Quantile coupling `G^{-1}(Φ(z))`. Positive `z` goes through the upper
    /// tail so that `Φ(z)` never rounds to one.
    pub fn couple(&self, z: f64) -> f64 {
        if z <= 0.0 {
            self.quantile(norm_cdf(z))
        } else {
            self.quantile_upper(norm_sf(z))
        }
    }
}

pub fn exact_median_cdf(law: &MedianLaw, x: f64) -> f64 {
    law.cdf(x)
}

pub fn exact_median_pdf(law: &MedianLaw, x: f64) -> f64 {
    law.pdf(x)
}

pub fn couple(law: &MedianLaw, z: f64) -> f64 {
    law.couple(z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingRow {
    pub m: usize,
    pub eps: f64,
    /// `sup m |2h(0)√m ξ̃ - z| / (1 + |z|³)` over the grid.
    pub sup_normalized_error: f64,
    pub argmax_z: f64,
    /// `|2h(0)√m ξ̃ - z|` at `z = 1`.
    pub error_at_one: f64,
}

/// Normalized coupling error of the standardized median over `|z| ≤ eps √m`,
/// on `grid` equally spaced points. Fully deterministic.
pub fn coupling_error_profile(model: &NoiseModel, m_list: &[usize], eps: f64, grid: usize) -> Result<Vec<CouplingRow>> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid("eps", format!("must lie in (0, 1], got {eps}")));
    }
    if grid < 2 {
        return Err(Error::invalid("grid", "need at least 2 points"));
    }
    let h0 = model.density_at_zero();
    m_list
        .iter()
        .map(|&m| {
            if m < 3 || m % 2 == 0 {
                return Err(Error::invalid("m", format!("must be odd and at least 3, got {m}")));
            }
            let law = MedianLaw::new(*model, m)?;
            let root_m = (m as f64).sqrt();
            let scale = 2.0 * h0 * root_m;
            let zmax = eps * root_m;
            let err = |z: f64| (scale * law.couple(z) - z).abs();
            let (sup, argmax) = (0..grid)
                .into_par_iter()
                .map(|i| {
                    let z = -zmax + 2.0 * zmax * i as f64 / (grid - 1) as f64;
                    (m as f64 * err(z) / (1.0 + z.abs().powi(3)), z)
                })
                .collect::<Vec<_>>()
                .into_iter()
                .fold((f64::NEG_INFINITY, 0.0), |acc, cur| if cur.0 > acc.0 { cur } else { acc });
            Ok(CouplingRow {
                m,
                eps,
                sup_normalized_error: sup,
                argmax_z: argmax,
                error_at_one: err(1.0),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmtRow {
    pub m: usize,
    /// `sup √m |X̃ - Y| / (1 + X̃²)` over `|X̃| ≤ √m / 2`.
    pub sup_normalized_error: f64,
    pub argmax_x: f64,
    /// `sup |X̃ - Y|` over the cell of `Y` values containing `Y = 0`, clipped
    /// to `|Y| ≤ √m / 2`.
    pub center_error: f64,
}

/// Quantile coupling of `X = 2(W - m/2)/√m`, `W ~ Bin(m, 1/2)`, with
/// `Y ~ N(0, 1)`.
///
/// `X̃` is constant on each cell `Φ^{-1}(P(W < w)) < Y ≤ Φ^{-1}(P(W ≤ w))`, so
/// the supremum over `Y` is attained at the cell endpoints, which are used
/// directly; no grid is needed. Cells are clipped to `|Y| ≤ √m / 2`.
pub fn kmt_binomial_coupling_check(m: usize) -> Result<KmtRow> {
    if m == 0 {
        return Err(Error::invalid("m", "must be at least 1"));
    }
    let mf = m as f64;
    let root_m = mf.sqrt();
    // P(W <= w) = I_{1/2}(m - w, w + 1); P(W > w) = I_{1/2}(w + 1, m - w)
    let y_upper = |w: usize| -> f64 {
        if w >= m {
            f64::INFINITY
        } else if 2 * w < m {
            norm_ppf(betainc((m - w) as f64, (w + 1) as f64, 0.5))
        } else {
            -norm_ppf(betainc((w + 1) as f64, (m - w) as f64, 0.5))
        }
    };
    let x_of = |w: usize| 2.0 * (w as f64 - mf / 2.0) / root_m;
    let window = 0.5 * root_m;
    let cell_error = |w: usize| -> f64 {
        let x = x_of(w);
        let hi = y_upper(w).min(window);
        let lo = if w == 0 { -window } else { y_upper(w - 1).max(-window) };
        (x - lo).abs().max((hi - x).abs())
    };
    let mut sup = 0.0;
    let mut argmax = f64::NAN;
    for w in 0..=m {
        let x = x_of(w);
        if x.abs() > window {
            continue;
        }
        let e = root_m * cell_error(w) / (1.0 + x * x);
        if e > sup {
            sup = e;
            argmax = x;
        }
    }
    // atom whose cell contains Y = 0
    let center = (0..=m).find(|&w| y_upper(w) >= 0.0).expect("last cell is unbounded");
    Ok(KmtRow {
        m,
        sup_normalized_error: sup,
        argmax_x: argmax,
        center_error: cell_error(center),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::special::{integrate, integrate_real_line};
    use proptest::prelude::*;

    fn gauss() -> NoiseModel {
        NoiseModel::gaussian(1.0).unwrap()
    }

    fn cauchy() -> NoiseModel {
        NoiseModel::cauchy(1.0).unwrap()
    }

    #[test]
    fn even_m_and_point_mass_rejected() {
        assert!(MedianLaw::new(gauss(), 4).is_err());
        assert!(MedianLaw::new(NoiseModel::uniform(0.0).unwrap(), 3).is_err());
        let law = MedianLaw::new(gauss(), 9).unwrap();
        assert_eq!((law.m(), law.k()), (9, 4));
    }

    #[test]
    fn cdf_hand_values() {
        for model in [gauss(), cauchy()] {
            let law = MedianLaw::new(model, 33).unwrap();
            assert!((law.cdf(0.0) - 0.5).abs() < 1e-14);
            let one = MedianLaw::new(model, 1).unwrap();
            for x in [-3.0, -0.2, 0.7, 5.0] {
                assert!((one.cdf(x) - model.cdf(x)).abs() < 1e-14);
                assert!((one.pdf(x) - model.density(x)).abs() < 1e-15);
            }
        }
        // uniform on [-1, 1]: H(0.6) = 0.8
        let law = MedianLaw::new(NoiseModel::uniform(1.0).unwrap(), 3).unwrap();
        assert!((law.cdf(0.6) - 0.896).abs() < 1e-13);
    }

    #[test]
    fn pdf_integrates_to_one_and_matches_cdf() {
        for model in [gauss(), cauchy(), NoiseModel::student_t(3.0, 1.0).unwrap()] {
            for m in [3, 9, 33] {
                let law = MedianLaw::new(model, m).unwrap();
                let total = integrate_real_line(|x| law.pdf(x), 0.0, 1e-13, 1e-13);
                assert!((total - 1.0).abs() < 1e-8, "{model} m={m}: {total}");
                let mut rng = stream_rng(m as u64, 0);
                for _ in 0..50 {
                    let x: f64 = rand::Rng::random_range(&mut rng, -3.0..3.0);
                    let direct = integrate(|t| law.pdf(t), -50.0, x, 1e-13, 1e-13) + law.cdf(-50.0);
                    assert!((direct - law.cdf(x)).abs() < 1e-8, "{model} m={m} x={x}");
                }
            }
        }
    }

    #[test]
    fn pdf_at_zero_against_normal_approximation() {
        let law = MedianLaw::new(gauss(), 129).unwrap();
        let k = 64.0;
        let h0 = gauss().density_at_zero();
        let approx = (8.0f64 * k).sqrt() * h0 / (2.0 * std::f64::consts::PI).sqrt();
        let ratio = law.pdf(0.0) / approx;
        assert!((ratio - 1.0).abs() < 5.0 / k, "{ratio}");
    }

    #[test]
    fn symmetry_of_median_law() {
        for model in [gauss(), cauchy()] {
            let law = MedianLaw::new(model, 33).unwrap();
            for x in [0.01, 0.3, 1.0, 4.0] {
                assert!((law.cdf(-x) + law.cdf(x) - 1.0).abs() < 1e-10);
                assert!((law.sf(x) - law.cdf(-x)).abs() < 1e-15 + 1e-12 * law.sf(x));
            }
        }
    }

    #[test]
    fn coupling_trivial_cases() {
        for model in [gauss(), cauchy()] {
            assert_eq!(MedianLaw::new(model, 9).unwrap().couple(0.0), 0.0);
            let one = MedianLaw::new(model, 1).unwrap();
            for z in [-2.5, -0.1, 0.4, 3.0] {
                let want = model.quantile(norm_cdf(z));
                assert!((one.couple(z) - want).abs() < 1e-10 * (1.0 + want.abs()));
            }
        }
        // standard normal with m = 1 couples to itself
        let id = MedianLaw::new(gauss(), 1).unwrap();
        for z in [-7.5, -1.0, 2.0, 7.5] {
            assert!((id.couple(z) - z).abs() < 1e-9);
        }
    }

    #[test]
    fn coupled_draws_follow_the_median_law() {
        use crate::binning::median;
        let law = MedianLaw::new(gauss(), 9).unwrap();
        let mut rng = stream_rng(11, 0);
        let n = 100_000;
        let mut normals = vec![0.0; n];
        gauss().fill(&mut rng, &mut normals);
        let coupled: Vec<f64> = normals.iter().map(|&z| law.couple(z)).collect();
        let mut buf = vec![0.0; 9];
        let direct: Vec<f64> = (0..n)
            .map(|_| {
                gauss().fill(&mut rng, &mut buf);
                median(&buf).unwrap()
            })
            .collect();
        assert!(crate::stats::ks_two_sample(&coupled, &direct) < 0.01);
    }

    #[test]
    fn profile_validation() {
        assert!(coupling_error_profile(&gauss(), &[9], 0.0, 10).is_err());
        assert!(coupling_error_profile(&gauss(), &[9], 1.5, 10).is_err());
        assert!(coupling_error_profile(&gauss(), &[8], 0.5, 10).is_err());
        assert!(coupling_error_profile(&gauss(), &[1], 0.5, 10).is_err());
        assert!(coupling_error_profile(&gauss(), &[9], 0.5, 1).is_err());
    }

    #[test]
    fn gaussian_profile_is_flat() {
        let rows = coupling_error_profile(&gauss(), &[9, 33, 129, 513], 0.5, 401).unwrap();
        for r in &rows {
            assert!(r.sup_normalized_error.is_finite() && r.sup_normalized_error < 0.5, "{r:?}");
        }
        let x: Vec<f64> = rows.iter().map(|r| (r.m as f64).ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.error_at_one.ln()).collect();
        let (slope, _, _) = crate::stats::linear_fit(&x, &y);
        assert!((-1.3..=-0.7).contains(&slope), "{slope}");
    }

    #[test]
    fn kmt_check() {
        let one = kmt_binomial_coupling_check(1).unwrap();
        assert!(one.sup_normalized_error.is_finite() && one.center_error.is_finite());
        let rows: Vec<KmtRow> = [16, 64, 256].iter().map(|&m| kmt_binomial_coupling_check(m).unwrap()).collect();
        for r in &rows {
            assert!(r.sup_normalized_error < 5.0, "{r:?}");
        }
        let x: Vec<f64> = rows.iter().map(|r| (r.m as f64).ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.center_error.ln()).collect();
        let (slope, _, _) = crate::stats::linear_fit(&x, &y);
        assert!((-0.8..=-0.2).contains(&slope), "{slope}");
        assert!(kmt_binomial_coupling_check(0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn couple_is_increasing(z in -6.0f64..6.0, dz in 1e-3f64..1.0, m in 0usize..40) {
            for model in [gauss(), cauchy()] {
                let law = MedianLaw::new(model, 2 * m + 1).unwrap();
                prop_assert!(law.couple(z + dz) > law.couple(z));
            }
        }
    }
}
