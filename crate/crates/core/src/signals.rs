//! Test functions on `[0, 1]`, their equispaced samples, and the Besov
//! sequence norm used as a smoothness diagnostic.
//!
//! Samples are taken at `i / n` for `i = 1..=n`. Part of the wavelet
//! literature samples at `(i - 1/2) / n` instead; the two differ by half a
//! grid step.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::special::integrate;
use crate::wavelet::WaveletPyramid;

#[derive(Debug, Deserialize)]
struct SignalTables {
    spikes: SpikesTable,
    doppler: DopplerTable,
    blocks: BlocksTable,
    bumps: BumpsTable,
}

#[derive(Debug, Deserialize)]
struct SpikesTable {
    scale: f64,
    centers: Vec<f64>,
    heights: Vec<f64>,
    rates: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct DopplerTable {
    eps: f64,
}

#[derive(Debug, Deserialize)]
struct BlocksTable {
    positions: Vec<f64>,
    heights: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct BumpsTable {
    positions: Vec<f64>,
    heights: Vec<f64>,
    widths: Vec<f64>,
}

fn tables() -> &'static SignalTables {
    static TABLES: OnceLock<SignalTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        toml::from_str(include_str!("../data/signals.toml")).expect("bundled signal table is valid TOML")
    })
}

/// Smoothness recorded for sine signals: the regularity of the default filter.
const SINE_NOMINAL_ALPHA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Signal {
    Zero,
    Constant(f64),
    Linear,
    Sine { freq: f64 },
    Spikes,
    Doppler,
    Blocks,
    Bumps,
}

impl Signal {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Signal::Zero => 0.0,
            Signal::Constant(c) => c,
            Signal::Linear => t,
            Signal::Sine { freq } => (2.0 * PI * freq * t).sin(),
            Signal::Spikes => {
                let s = &tables().spikes;
                let sum: f64 = s
                    .centers
                    .iter()
                    .zip(&s.heights)
                    .zip(&s.rates)
                    .map(|((c, h), r)| h * (-r * (t - c) * (t - c)).exp())
                    .sum();
                s.scale * sum
            }
            Signal::Doppler => {
                let eps = tables().doppler.eps;
                (t * (1.0 - t)).max(0.0).sqrt() * (2.0 * PI * (1.0 + eps) / (t + eps)).sin()
            }
            Signal::Blocks => {
                let b = &tables().blocks;
                b.positions
                    .iter()
                    .zip(&b.heights)
                    .map(|(p, h)| h * 0.5 * (1.0 + sgn(t - p)))
                    .sum()
            }
            Signal::Bumps => {
                let b = &tables().bumps;
                b.positions
                    .iter()
                    .zip(&b.heights)
                    .zip(&b.widths)
                    .map(|((p, h), w)| h * (1.0 + (t - p).abs() / w).powi(-4))
                    .sum()
            }
        }
    }

    /// Declared smoothness for expected-slope bookkeeping. Never used by estimators.
    pub fn nominal_alpha(&self) -> Option<f64> {
        match self {
            Signal::Zero | Signal::Constant(_) => None,
            Signal::Sine { .. } => Some(SINE_NOMINAL_ALPHA),
            Signal::Blocks => Some(0.5),
            Signal::Linear | Signal::Spikes | Signal::Doppler | Signal::Bumps => None,
        }
    }

    /// `Q(f) = ∫_0^1 f(t)^2 dt`.
    pub fn energy(&self) -> f64 {
        match *self {
            Signal::Zero => 0.0,
            Signal::Constant(c) => c * c,
            Signal::Linear => 1.0 / 3.0,
            Signal::Sine { freq } => {
                let w = 4.0 * PI * freq;
                0.5 - (w.sin()) / (2.0 * w)
            }
            _ => {
                // piecewise so narrow features are not stepped over
                let pieces = 256;
                (0..pieces)
                    .map(|i| {
                        let a = i as f64 / pieces as f64;
                        let b = (i + 1) as f64 / pieces as f64;
                        integrate(|t| self.eval(t).powi(2), a, b, 1e-14, 1e-12)
                    })
                    .sum()
            }
        }
    }

    /// Samples at `i / n`, `i = 1..=n`.
    pub fn sample(&self, n: usize) -> Result<SignalGrid> {
        sample_signal(self, n)
    }
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl FromStr for Signal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownSignal(s.to_string());
        let mut parts = s.trim().splitn(2, ':');
        let name = parts.next().unwrap_or("").to_ascii_lowercase();
        let arg = parts.next();
        let num = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(unknown)?
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(unknown)
        };
        let signal = match name.as_str() {
            "zero" => Signal::Zero,
            "constant" => Signal::Constant(num(arg)?),
            "linear" => Signal::Linear,
            "sine" => Signal::Sine {
                freq: if arg.is_some() { num(arg)? } else { 1.0 },
            },
            "spikes" => Signal::Spikes,
            "doppler" => Signal::Doppler,
            "blocks" => Signal::Blocks,
            "bumps" => Signal::Bumps,
            _ => return Err(unknown()),
        };
        let takes_arg = matches!(signal, Signal::Constant(_) | Signal::Sine { .. });
        if arg.is_some() && !takes_arg {
            return Err(unknown());
        }
        Ok(signal)
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Signal::Zero => f.write_str("zero"),
            Signal::Constant(c) => write!(f, "constant:{c}"),
            Signal::Linear => f.write_str("linear"),
            Signal::Sine { freq } => write!(f, "sine:{freq}"),
            Signal::Spikes => f.write_str("spikes"),
            Signal::Doppler => f.write_str("doppler"),
            Signal::Blocks => f.write_str("blocks"),
            Signal::Bumps => f.write_str("bumps"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalGrid {
    pub values: Vec<f64>,
    pub n: usize,
    pub signal_id: String,
    pub nominal_alpha: Option<f64>,
}

pub fn sample_signal(signal: &Signal, n: usize) -> Result<SignalGrid> {
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let values = (1..=n).map(|i| signal.eval(i as f64 / n as f64)).collect();
    Ok(SignalGrid {
        values,
        n,
        signal_id: signal.to_string(),
        nominal_alpha: signal.nominal_alpha(),
    })
}

fn lp_norm(v: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    if p == 2.0 {
        return v.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Besov sequence norm `‖father‖_p + (Σ_j (2^{js} ‖θ_j‖_p)^q)^{1/q}` with
/// `s = α + 1/2 - 1/p`, summed over the levels present in the pyramid.
pub fn besov_seq_norm(pyramid: &WaveletPyramid, alpha: f64, p: f64, q: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid("p", format!("must be >= 1, got {p}")));
    }
    if !(q >= 1.0) {
        return Err(Error::invalid("q", format!("must be >= 1, got {q}")));
    }
    let s = alpha + 0.5 - 1.0 / p;
    if !(s > 0.0) {
        return Err(Error::invalid(
            "alpha",
            format!("alpha + 1/2 - 1/p = {s} must be positive"),
        ));
    }
    let father = lp_norm(&pyramid.father, p);
    let detail_sum: f64 = pyramid
        .details
        .iter()
        .enumerate()
        .map(|(i, level)| {
            let j = (pyramid.j0 + i) as f64;
            ((j * s).exp2() * lp_norm(level, p)).powf(q)
        })
        .sum();
    Ok(father + detail_sum.powf(1.0 / q))
}

/// Observations read from a CSV file with a `y` column and optional `f_true`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSeries {
    pub y: Vec<f64>,
    pub f_true: Option<Vec<f64>>,
}

pub fn load_series_csv(path: impl AsRef<Path>) -> Result<CsvSeries> {
    let path = path.as_ref();
    let csv_err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| csv_err("missing `y` column".into()))?;
    let f_col = headers.iter().position(|h| h == "f_true");

    let mut y = Vec::new();
    let mut f_true = f_col.map(|_| Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let parse = |col: usize| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| csv_err(format!("row {}: cannot parse `{raw}`", row + 2)))
        };
        y.push(parse(y_col)?);
        if let (Some(col), Some(f)) = (f_col, f_true.as_mut()) {
            f.push(parse(col)?);
        }
    }
    Ok(CsvSeries { y, f_true })
}
