//! Numeric primitives: the normal law, the regularized incomplete beta
//! function and its inverse, and adaptive Gauss–Kronrod quadrature.
//!
//! Everything here works in `f64` and targets close to full double precision,
//! because the median-law oracle composes these functions and then multiplies
//! the residual by `m^{3/2}`.

use std::f64::consts::SQRT_2;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Natural log of the gamma function.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline]
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

/// Standard normal CDF, relative accuracy near machine precision in both tails.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Standard normal survival function `1 - Φ(z)`.
#[inline]
pub fn norm_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

/// Standard normal quantile.
///
/// Acklam's rational approximation followed by Halley refinement against
/// `erfc`. Returns `±inf` at the endpoints and NaN outside `[0, 1]`.
pub fn norm_ppf(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        // 1 - p is exact here
        return -lower_ppf(1.0 - p);
    }
    lower_ppf(p)
}

fn lower_ppf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    // Halley steps on the relative residual; two are plenty from 1e-9.
    for _ in 0..3 {
        let e = norm_cdf(x) - p;
        let u = e / norm_pdf(x);
        let step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Maximum continued-fraction iterations; convergence needs `O(sqrt(max(a, b)))`.
const CF_MAX_ITER: usize = 5000;

/// Regularized incomplete beta function `I_x(a, b)`.
///
/// Panics in debug builds on `a <= 0` or `b <= 0`; `x` is clamped to `[0, 1]`.
pub fn betainc(a: f64, b: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        1.0 - betainc_cf(b, a, 1.0 - x)
    } else {
        betainc_cf(a, b, x)
    }
}

/// Complement `1 - I_x(a, b)` computed without cancellation when it is small.
pub fn betainc_complement(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x >= 1.0 {
        return 0.0;
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        betainc_cf(b, a, 1.0 - x)
    } else {
        1.0 - betainc_cf(a, b, x)
    }
}

/// Density of the Beta(a, b) law.
pub fn beta_pdf(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)).exp()
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn betainc_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let ln_prefix = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    if ln_prefix < -745.0 {
        return 0.0;
    }
    let prefix = ln_prefix.exp() / a;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut f = d;

    for i in 1..=CF_MAX_ITER {
        let m = i as f64;
        let m2 = 2.0 * m;

        let even = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + even * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + even / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        f *= d * c;

        let odd = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + odd * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + odd / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        f *= delta;
        if (delta - 1.0).abs() <= f64::EPSILON {
            break;
        }
    }
    prefix * f
}

/// Inverse of `x ↦ I_x(a, b)`: the `x` in `[0, 1]` with `I_x(a, b) = p`.
///
/// Bracketed Newton (on the log scale in the lower tail) from the
/// Abramowitz–Stegun style starting value. For `p > 1/2` the problem is
/// reflected through `I_{1-x}(b, a) = 1 - I_x(a, b)`.
pub fn betainc_inv(a: f64, b: f64, p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    if a == b && p == 0.5 {
        return 0.5;
    }
    if p > 0.5 {
        return 1.0 - betainc_inv_lower(b, a, 1.0 - p);
    }
    betainc_inv_lower(a, b, p)
}

/// Inverse of the complement: the `x` with `1 - I_x(a, b) = q`.
pub fn betainc_complement_inv(a: f64, b: f64, q: f64) -> f64 {
    if q.is_nan() || !(0.0..=1.0).contains(&q) {
        return f64::NAN;
    }
    if q <= 0.5 {
        1.0 - betainc_inv_lower(b, a, q)
    } else {
        betainc_inv_lower(a, b, 1.0 - q)
    }
}

fn betainc_inv_lower(a: f64, b: f64, p: f64) -> f64 {
    let mut x = initial_beta_guess(a, b, p);
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    let ln_p = p.ln();
    let ln_b = ln_beta(a, b);
    let use_log = p < 1e-3;

    for _ in 0..300 {
        if !(x > lo && x < hi) {
            // halve toward zero while the lower bracket is open; tails are tiny
            x = if lo == 0.0 { 0.5 * hi } else { 0.5 * (lo + hi) };
        }
        let ix = betainc(a, b, x);
        if ix < p {
            lo = x;
        } else {
            hi = x;
        }
        let ln_pdf = (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_b;
        let step = if use_log {
            // g(x) = ln I_x - ln p, g' = pdf / I_x
            if ix <= 0.0 {
                f64::NAN
            } else {
                (ix.ln() - ln_p) * ix / ln_pdf.exp()
            }
        } else {
            (ix - p) / ln_pdf.exp()
        };
        let next = x - step;
        let converged = step.is_finite() && step.abs() <= 4.0 * f64::EPSILON * x;
        if converged {
            return next.clamp(lo.min(next), hi.max(next));
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi {
            return 0.5 * (lo + hi);
        }
        x = if step.is_finite() && next > lo && next < hi {
            next
        } else {
            f64::NAN
        };
    }
    0.5 * (lo + hi)
}

fn initial_beta_guess(a: f64, b: f64, p: f64) -> f64 {
    if a >= 1.0 && b >= 1.0 {
        let t = (-2.0 * p.ln()).sqrt();
        let mut z = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
        z = -z.abs();
        // p <= 0.5 always here, so the normal deviate is nonpositive
        let al = (z * z - 3.0) / 6.0;
        let h = 2.0 / (1.0 / (2.0 * a - 1.0) + 1.0 / (2.0 * b - 1.0));
        let w = z * (al + h).sqrt() / h
            - (1.0 / (2.0 * b - 1.0) - 1.0 / (2.0 * a - 1.0)) * (al + 5.0 / 6.0 - 2.0 / (3.0 * h));
        a / (a + b * (2.0 * w).exp())
    } else {
        let lna = (a / (a + b)).ln();
        let lnb = (b / (a + b)).ln();
        let t = (a * lna).exp() / a;
        let u = (b * lnb).exp() / b;
        let w = t + u;
        if p < t / w {
            (a * w * p).powf(1.0 / a)
        } else {
            1.0 - (b * w * (1.0 - p)).powf(1.0 / b)
        }
    }
}

/// Gauss–Kronrod 7/15 abscissae (nonnegative half, descending).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (i, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let s = f(center - dx) + f(center + dx);
        kronrod += w * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod quadrature of `f` over a finite interval.
///
/// Bisects the interval with the largest error estimate until the summed
/// error falls below `max(abs_tol, rel_tol * |integral|)` or the interval
/// budget runs out.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (sign, lo, hi) = if a < b { (1.0, a, b) } else { (-1.0, b, a) };
    let mut segments: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(64);
    let (v, e) = gk15(&f, lo, hi);
    segments.push((lo, hi, v, e));
    for _ in 0..4000 {
        let total: f64 = segments.iter().map(|s| s.2).sum();
        let err: f64 = segments.iter().map(|s| s.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (s_lo, s_hi, _, _) = segments.swap_remove(worst);
        let mid = 0.5 * (s_lo + s_hi);
        if mid <= s_lo || mid >= s_hi {
            segments.push((s_lo, s_hi, gk15(&f, s_lo, s_hi).0, 0.0));
            continue;
        }
        let (v1, e1) = gk15(&f, s_lo, mid);
        let (v2, e2) = gk15(&f, mid, s_hi);
        segments.push((s_lo, mid, v1, e1));
        segments.push((mid, s_hi, v2, e2));
    }
    segments.sort_by(|x, y| x.0.total_cmp(&y.0));
    sign * segments.iter().map(|s| s.2).sum::<f64>()
}

/// Integral of `f` over `[a, ∞)` through the map `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    integrate(
        |t| {
            let s = 1.0 - t;
            let x = a + t / s;
            let v = f(x) / (s * s);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// Integral of `f` over the real line, split at `center`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, center: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    let right = integrate_to_infinity(&f, center, 0.5 * abs_tol, rel_tol);
    let left = integrate_to_infinity(|x| f(2.0 * center - x), center, 0.5 * abs_tol, rel_tol);
    left + right
}
