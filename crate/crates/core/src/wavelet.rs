//! Periodized orthonormal discrete wavelet transform.
//!
//! The forward transform returns `T^{-1/2} W x`, so that for data with noise
//! variance `v` every coefficient carries variance `v / T`. `inverse` undoes
//! the scaling and `W` together.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Daubechies extremal-phase lowpass filters (reconstruction order).
const D8: [f64; 8] = [
    0.230_377_813_308_896_500_86,
    0.714_846_570_552_915_647_09,
    0.630_880_767_929_858_907_88,
    -0.027_983_769_416_859_854_211,
    -0.187_034_811_719_093_084_08,
    0.030_841_381_835_560_763_627,
    0.032_883_011_666_885_199_735,
    -0.010_597_401_785_069_032_105,
];

const D16: [f64; 16] = [
    0.054_415_842_243_104_009_955,
    0.312_871_590_914_299_970_66,
    0.675_630_736_297_289_806_81,
    0.585_354_683_654_206_712_77,
    -0.015_829_105_256_349_305_667,
    -0.284_015_542_961_546_926_52,
    0.000_472_484_573_913_282_770_36,
    0.128_747_426_620_478_458_86,
    -0.017_369_301_001_807_546_17,
    -0.044_088_253_930_794_751_507,
    0.013_981_027_917_398_281_649,
    0.008_746_094_047_405_776_716_4,
    -0.004_870_352_993_451_574_310_4,
    -0.000_391_740_373_376_947_046_3,
    0.000_675_449_406_450_569_366_37,
    -0.000_117_476_784_124_769_533_73,
];

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFilter {
    name: &'static str,
    lowpass: Vec<f64>,
    regularity: u32,
}

impl WaveletFilter {
    pub fn haar() -> Self {
        Self {
            name: "haar",
            lowpass: vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2],
            regularity: 1,
        }
    }

    /// 8-tap Daubechies filter (four vanishing moments). The default.
    pub fn d8() -> Self {
        Self {
            name: "d8",
            lowpass: D8.to_vec(),
            regularity: 2,
        }
    }

    /// 16-tap Daubechies filter (eight vanishing moments).
    pub fn d16() -> Self {
        Self {
            name: "d16",
            lowpass: D16.to_vec(),
            regularity: 3,
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.lowpass
    }

    /// Quadrature-mirror highpass `g[l] = (-1)^l h[L-1-l]`.
    pub fn highpass(&self) -> Vec<f64> {
        let len = self.lowpass.len();
        (0..len)
            .map(|l| {
                let v = self.lowpass[len - 1 - l];
                if l % 2 == 0 {
                    v
                } else {
                    -v
                }
            })
            .collect()
    }

    /// Integer smoothness index used for bookkeeping in rate experiments.
    pub fn regularity(&self) -> u32 {
        self.regularity
    }
}

impl Default for WaveletFilter {
    fn default() -> Self {
        Self::d8()
    }
}

impl FromStr for WaveletFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "haar" | "d2" => Ok(Self::haar()),
            "d8" => Ok(Self::d8()),
            "d16" => Ok(Self::d16()),
            other => Err(Error::invalid(
                "filter",
                format!("unknown filter `{other}` (expected haar, d8 or d16)"),
            )),
        }
    }
}

impl fmt::Display for WaveletFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

/// Multiresolution coefficient set: `2^{j0}` father coefficients followed by
/// detail levels `j0, ..., J-1`, level `j` holding `2^j` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    pub father: Vec<f64>,
    /// `details[i]` is level `j0 + i`.
    pub details: Vec<Vec<f64>>,
    pub j0: usize,
    pub levels: usize,
    pub scale_factor: f64,
}

impl WaveletPyramid {
    /// All-zero pyramid with the standard `T^{-1/2}` scaling.
    pub fn zeros(levels: usize, j0: usize) -> Result<Self> {
        if levels == 0 || j0 >= levels {
            return Err(Error::LevelOutOfRange {
                level: j0,
                constraint: format!("j0 < J = {levels}, J >= 1"),
            });
        }
        Ok(Self {
            father: vec![0.0; 1 << j0],
            details: (j0..levels).map(|j| vec![0.0; 1 << j]).collect(),
            j0,
            levels,
            scale_factor: 1.0 / ((1usize << levels) as f64).sqrt(),
        })
    }

    /// Total number of coefficients, `2^J`.
    pub fn len(&self) -> usize {
        self.father.len() + self.details.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Detail coefficients at level `j`, or `None` outside `j0..J`.
    pub fn level(&self, j: usize) -> Option<&[f64]> {
        j.checked_sub(self.j0)
            .and_then(|i| self.details.get(i))
            .map(Vec::as_slice)
    }

    pub fn level_mut(&mut self, j: usize) -> Option<&mut Vec<f64>> {
        j.checked_sub(self.j0).and_then(move |i| self.details.get_mut(i))
    }

    /// Father then details in the order of the stacked coefficient vector.
    pub fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        self.father
            .iter()
            .chain(self.details.iter().flatten())
            .copied()
    }

    pub fn energy(&self) -> f64 {
        self.coefficients().map(|c| c * c).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.father.iter_mut().for_each(|v| *v *= c);
        out.details.iter_mut().flatten().for_each(|v| *v *= c);
        out
    }

    /// Copy with every detail level above `j_max` set to zero.
    pub fn truncated_above(&self, j_max: usize) -> Self {
        let mut out = self.clone();
        for (i, level) in out.details.iter_mut().enumerate() {
            if self.j0 + i > j_max {
                level.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.j0 >= self.levels {
            return Err(Error::MalformedPyramid(format!(
                "j0 = {} must be below J = {}",
                self.j0, self.levels
            )));
        }
        if self.father.len() != 1 << self.j0 {
            return Err(Error::MalformedPyramid(format!(
                "father length {} != 2^{}",
                self.father.len(),
                self.j0
            )));
        }
        if self.details.len() != self.levels - self.j0 {
            return Err(Error::MalformedPyramid(format!(
                "{} detail levels, expected {}",
                self.details.len(),
                self.levels - self.j0
            )));
        }
        for (i, d) in self.details.iter().enumerate() {
            if d.len() != 1 << (self.j0 + i) {
                return Err(Error::MalformedPyramid(format!(
                    "level {} has {} coefficients",
                    self.j0 + i,
                    d.len()
                )));
            }
        }
        if !(self.scale_factor.is_finite() && self.scale_factor != 0.0) {
            return Err(Error::MalformedPyramid("zero scale factor".into()));
        }
        Ok(())
    }
}

/// `log2(len)` if `len` is a power of two.
pub fn dyadic_levels(len: usize) -> Result<usize> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(len));
    }
    Ok(len.trailing_zeros() as usize)
}

fn analysis_step(x: &[f64], h: &[f64], g: &[f64], approx: &mut [f64], detail: &mut [f64]) {
    let n = x.len();
    for k in 0..n / 2 {
        let mut a = 0.0;
        let mut d = 0.0;
        for (l, (&hl, &gl)) in h.iter().zip(g).enumerate() {
            let v = x[(2 * k + l) % n];
            a += hl * v;
            d += gl * v;
        }
        approx[k] = a;
        detail[k] = d;
    }
}

fn synthesis_step(approx: &[f64], detail: &[f64], h: &[f64], g: &[f64], out: &mut [f64]) {
    let n = 2 * approx.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..approx.len() {
        let (a, d) = (approx[k], detail[k]);
        for (l, (&hl, &gl)) in h.iter().zip(g).enumerate() {
            out[(2 * k + l) % n] += hl * a + gl * d;
        }
    }
}

/// Forward periodized DWT down to level `j0`, scaled by `T^{-1/2}`.
pub fn forward(x: &[f64], filter: &WaveletFilter, j0: usize) -> Result<WaveletPyramid> {
    let levels = dyadic_levels(x.len())?;
    if levels == 0 || j0 >= levels {
        return Err(Error::LevelOutOfRange {
            level: j0,
            constraint: format!("j0 < J = {levels}"),
        });
    }
    let h = filter.lowpass();
    let g = filter.highpass();
    let scale = 1.0 / (x.len() as f64).sqrt();

    let mut details = vec![Vec::new(); levels - j0];
    let mut current = x.to_vec();
    for j in (j0..levels).rev() {
        let half = current.len() / 2;
        let mut approx = vec![0.0; half];
        let mut detail = vec![0.0; half];
        analysis_step(&current, h, &g, &mut approx, &mut detail);
        detail.iter_mut().for_each(|v| *v *= scale);
        details[j - j0] = detail;
        current = approx;
    }
    current.iter_mut().for_each(|v| *v *= scale);
    Ok(WaveletPyramid {
        father: current,
        details,
        j0,
        levels,
        scale_factor: scale,
    })
}

/// Exact inverse of [`forward`], including the `T^{-1/2}` scaling.
pub fn inverse(p: &WaveletPyramid, filter: &WaveletFilter) -> Result<Vec<f64>> {
    p.validate()?;
    let h = filter.lowpass();
    let g = filter.highpass();
    let unscale = 1.0 / p.scale_factor;

    let mut current: Vec<f64> = p.father.iter().map(|v| v * unscale).collect();
    for detail in &p.details {
        let d: Vec<f64> = detail.iter().map(|v| v * unscale).collect();
        let mut next = vec![0.0; 2 * current.len()];
        synthesis_step(&current, &d, h, &g, &mut next);
        current = next;
    }
    Ok(current)
}

/// Values of the wavelet expansion at the grid points `i / T`, `i = 1..T`,
/// i.e. `T^{1/2} W^{-1} θ`.
pub fn synthesize_function(p: &WaveletPyramid, filter: &WaveletFilter, grid_size: usize) -> Result<Vec<f64>> {
    let expected = 1usize
        .checked_shl(p.levels as u32)
        .ok_or_else(|| Error::MalformedPyramid(format!("J = {} too large", p.levels)))?;
    if grid_size != expected {
        return Err(Error::LengthMismatch {
            expected,
            got: grid_size,
        });
    }
    inverse(p, filter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()
    }

    fn filters() -> [WaveletFilter; 3] {
        [WaveletFilter::haar(), WaveletFilter::d8(), WaveletFilter::d16()]
    }

    #[test]
    fn filter_tables_are_orthonormal() {
        for f in filters() {
            let h = f.lowpass();
            let sum: f64 = h.iter().sum();
            assert!((sum - 2f64.sqrt()).abs() < 1e-10, "{f}");
            for k in 0..h.len() / 2 {
                let dot: f64 = (0..h.len() - 2 * k).map(|i| h[i] * h[i + 2 * k]).sum();
                let target = if k == 0 { 1.0 } else { 0.0 };
                assert!((dot - target).abs() < 1e-10, "{f} k={k}: {dot}");
            }
            // highpass annihilates constants
            assert!(f.highpass().iter().sum::<f64>().abs() < 1e-14);
        }
    }

    #[test]
    fn haar_constant_lands_in_father() {
        let c = 3.5;
        let p = forward(&[c; 4], &WaveletFilter::haar(), 0).unwrap();
        assert_eq!(p.father.len(), 1);
        assert!((p.father[0] - c).abs() < 1e-14);
        assert!(p.details.iter().flatten().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn zero_in_zero_out() {
        let p = forward(&[0.0; 64], &WaveletFilter::d8(), 3).unwrap();
        assert!(p.coefficients().all(|v| v == 0.0));
        let x = inverse(&WaveletPyramid::zeros(6, 3).unwrap(), &WaveletFilter::d8()).unwrap();
        assert_eq!(x, vec![0.0; 64]);
    }

    #[test]
    fn pyramid_shape() {
        let p = forward(&random_vec(256, 1), &WaveletFilter::d16(), 2).unwrap();
        assert_eq!(p.len(), 256);
        assert_eq!(p.father.len(), 4);
        for j in 2..8 {
            assert_eq!(p.level(j).unwrap().len(), 1 << j);
        }
        assert!(p.level(8).is_none());
        assert!(p.level(1).is_none());
    }

    #[test]
    fn rejects_bad_lengths_and_levels() {
        assert!(matches!(forward(&[1.0; 12], &WaveletFilter::haar(), 0), Err(Error::NotPowerOfTwo(12))));
        assert!(forward(&[1.0; 8], &WaveletFilter::haar(), 3).is_err());
        assert!(forward(&[1.0; 1], &WaveletFilter::haar(), 0).is_err());
        let mut p = WaveletPyramid::zeros(4, 1).unwrap();
        p.details[1].pop();
        assert!(matches!(inverse(&p, &WaveletFilter::haar()), Err(Error::MalformedPyramid(_))));
        let p = WaveletPyramid::zeros(4, 1).unwrap();
        assert!(synthesize_function(&p, &WaveletFilter::haar(), 8).is_err());
    }

    #[test]
    fn round_trip_every_filter_and_level() {
        for f in filters() {
            let x = random_vec(128, 5);
            for j0 in 0..7 {
                let back = inverse(&forward(&x, &f, j0).unwrap(), &f).unwrap();
                let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-10, "{f} j0={j0}: {err}");
            }
        }
    }

    #[test]
    fn basis_vectors_are_orthonormal() {
        // synthesize every unit coefficient and check the Gram matrix
        let f = WaveletFilter::d8();
        let t = 32;
        let basis: Vec<Vec<f64>> = (0..t)
            .map(|idx| {
                let mut p = WaveletPyramid::zeros(5, 1).unwrap();
                if idx < 2 {
                    p.father[idx] = 1.0;
                } else {
                    let mut rem = idx - 2;
                    for level in p.details.iter_mut() {
                        if rem < level.len() {
                            level[rem] = 1.0;
                            break;
                        }
                        rem -= level.len();
                    }
                }
                // undo the T^{1/2} gain so columns of W^{-1} are recovered
                inverse(&p, &f).unwrap().iter().map(|v| v / (t as f64).sqrt()).collect()
            })
            .collect();
        for i in 0..t {
            for k in 0..t {
                let dot: f64 = basis[i].iter().zip(&basis[k]).map(|(a, b)| a * b).sum();
                let target = if i == k { 1.0 } else { 0.0 };
                assert!((dot - target).abs() < 1e-10, "({i},{k}) = {dot}");
            }
        }
    }

    #[test]
    fn truncation_never_adds_energy() {
        let f = WaveletFilter::d8();
        let x = random_vec(256, 9);
        let p = forward(&x, &f, 3).unwrap();
        let cut = p.truncated_above(5);
        let y = synthesize_function(&cut, &f, 256).unwrap();
        let y_direct = inverse(&cut, &f).unwrap();
        assert_eq!(y, y_direct);
        let e_full: f64 = x.iter().map(|v| v * v).sum();
        let e_cut: f64 = y.iter().map(|v| v * v).sum();
        assert!(e_cut <= e_full);
    }
}
