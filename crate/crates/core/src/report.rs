//! CSV tables and SVG plots.

use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::coupling::CouplingRow;
use crate::error::{Error, Result};
use crate::harness::{noisy_sample, RiskRow, RiskTable};
use crate::noise::NoiseModel;
use crate::quadratic::QuadraticRiskRow;
use crate::rng::stream_rng;
use crate::shrinkage::{denoise, EstimatorConfig};
use crate::signals::Signal;
use crate::wavelet::WaveletPyramid;

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:?}")
}

fn csv_error(path: &Path, e: impl ToString) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_risk_csv(path: &Path, rows: &[RiskRow]) -> Result<()> {
    write_csv(
        path,
        &["n", "reps", "risk", "stderr"],
        rows.iter()
            .map(|r| vec![r.n.to_string(), r.reps.to_string(), fmt_float(r.risk), fmt_float(r.stderr)]),
    )
}

pub fn write_quadratic_csv(path: &Path, rows: &[QuadraticRiskRow]) -> Result<()> {
    write_csv(
        path,
        &["n", "reps", "q_true", "mean_qhat", "n_mse", "stderr"],
        rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.reps.to_string(),
                fmt_float(r.q_true),
                fmt_float(r.mean_qhat),
                fmt_float(r.n_mse),
                fmt_float(r.stderr),
            ]
        }),
    )
}

pub fn write_coupling_csv(path: &Path, rows: &[CouplingRow]) -> Result<()> {
    write_csv(
        path,
        &["m", "eps", "sup_normalized_error", "argmax_z"],
        rows.iter().map(|r| {
            vec![
                r.m.to_string(),
                fmt_float(r.eps),
                fmt_float(r.sup_normalized_error),
                fmt_float(r.argmax_z),
            ]
        }),
    )
}

/// Named columns of equal length.
pub fn write_columns_csv(path: &Path, columns: &[(&str, &[f64])]) -> Result<()> {
    let len = columns.first().map_or(0, |c| c.1.len());
    if let Some(bad) = columns.iter().find(|c| c.1.len() != len) {
        return Err(Error::LengthMismatch {
            expected: len,
            got: bad.1.len(),
        });
    }
    let header: Vec<&str> = columns.iter().map(|c| c.0).collect();
    write_csv(path, &header, (0..len).map(|i| columns.iter().map(|c| fmt_float(c.1[i])).collect()))
}

#[derive(Debug, Clone, Copy)]
enum Mark {
    Line,
    Dots,
}

struct Series<'a> {
    label: &'a str,
    points: Vec<(f64, f64)>,
    color: RGBColor,
    mark: Mark,
}

const SIZE: (u32, u32) = (800, 500);

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo <= 0.0 {
        let d = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return (lo - d, hi + d);
    }
    let d = 0.05 * (hi - lo);
    (lo - d, hi + d)
}

fn extent(series: &[Series], pick: impl Fn(&(f64, f64)) -> f64) -> (f64, f64) {
    series
        .iter()
        .flat_map(|s| s.points.iter().map(&pick))
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn plot(path: &Path, title: &str, x_desc: &str, y_desc: &str, series: &[Series], log_log: bool) -> Result<()> {
    let plot_err = |e: &dyn std::fmt::Display| Error::Plot {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let (x0, x1) = extent(series, |p| p.0);
    let (y0, y1) = extent(series, |p| p.1);
    let mut builder = ChartBuilder::on(&root);
    builder
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70);
    let legend = series.iter().any(|s| !s.label.is_empty());
    if log_log {
        let (x0, x1) = (x0 / 1.3, x1 * 1.3);
        let (y0, y1) = (y0 / 1.5, y1 * 1.5);
        let mut chart = builder
            .build_cartesian_2d((x0..x1).log_scale(), (y0..y1).log_scale())
            .map_err(|e| plot_err(&e))?;
        chart
            .configure_mesh()
            .x_desc(x_desc)
            .y_desc(y_desc)
            .draw()
            .map_err(|e| plot_err(&e))?;
        for s in series {
            let pts: Vec<(f64, f64)> = s.points.iter().copied().filter(|p| p.0 > 0.0 && p.1 > 0.0).collect();
            chart
                .draw_series(LineSeries::new(pts.clone(), s.color.stroke_width(2)))
                .map_err(|e| plot_err(&e))?
                .label(s.label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], s.color));
            chart
                .draw_series(pts.iter().map(|&p| Circle::new(p, 3, s.color.filled())))
                .map_err(|e| plot_err(&e))?;
        }
        if legend {
            chart
                .configure_series_labels()
                .border_style(BLACK)
                .draw()
                .map_err(|e| plot_err(&e))?;
        }
    } else {
        let (x0, x1) = padded(x0, x1);
        let (y0, y1) = padded(y0, y1);
        let mut chart = builder.build_cartesian_2d(x0..x1, y0..y1).map_err(|e| plot_err(&e))?;
        chart
            .configure_mesh()
            .x_desc(x_desc)
            .y_desc(y_desc)
            .draw()
            .map_err(|e| plot_err(&e))?;
        for s in series {
            let color = s.color;
            let drawn = match s.mark {
                Mark::Line => chart.draw_series(LineSeries::new(s.points.clone(), color.stroke_width(1))),
                Mark::Dots => chart.draw_series(s.points.iter().map(|&p| Circle::new(p, 1, color.filled()))),
            }
            .map_err(|e| plot_err(&e))?;
            drawn
                .label(s.label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        }
        if legend {
            chart
                .configure_series_labels()
                .border_style(BLACK)
                .background_style(WHITE.mix(0.8))
                .draw()
                .map_err(|e| plot_err(&e))?;
        }
    }
    root.present().map_err(|e| plot_err(&e))
}

/// Classic level-by-position display: level `j` sits on the line `y = j` and
/// each coefficient is a vertical stem scaled by the largest detail magnitude.
fn coefficient_plot(path: &Path, title: &str, p: &WaveletPyramid, scale_ref: f64) -> Result<()> {
    let plot_err = |e: &dyn std::fmt::Display| Error::Plot {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let top = p.levels as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..1.0, (p.j0 as f64 - 1.0)..top)
        .map_err(|e| plot_err(&e))?;
    chart
        .configure_mesh()
        .x_desc("position k / 2^j")
        .y_desc("level j")
        .disable_x_mesh()
        .draw()
        .map_err(|e| plot_err(&e))?;
    let unit = if scale_ref > 0.0 { 0.45 / scale_ref } else { 0.0 };
    let mut stems = Vec::new();
    for (i, level) in p.details.iter().enumerate() {
        let j = (p.j0 + i) as f64;
        let width = level.len() as f64;
        for (k, c) in level.iter().enumerate() {
            let x = (k as f64 + 0.5) / width;
            stems.push(PathElement::new(vec![(x, j), (x, j + c * unit)], BLUE));
        }
    }
    chart.draw_series(stems).map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `risk.csv` and, for a non-empty table, `risk_loglog.svg` plus
/// `overlay.svg` when the table carries a fit. Returns the files written.
pub fn emit_report(table: &RiskTable, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out_dir)?;
    let mut written = Vec::new();
    let csv_path = out_dir.join("risk.csv");
    write_risk_csv(&csv_path, &table.rows)?;
    written.push(csv_path);
    if table.rows.is_empty() {
        return Ok(written);
    }
    let loglog = out_dir.join("risk_loglog.svg");
    let pts: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.n as f64, r.risk)).collect();
    let title = format!("{} risk, {} under {}", table.spec.mode, table.spec.signal, table.spec.noise);
    plot(
        &loglog,
        &title,
        "n",
        "risk",
        &[Series { label: "", points: pts, color: BLUE, mark: Mark::Line }],
        true,
    )?;
    written.push(loglog);
    if let Some(o) = &table.overlay {
        let path = out_dir.join("overlay.svg");
        let zip = |v: &[f64]| o.grid.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
        plot(
            &path,
            &format!("fit at n = {}", o.n),
            "t",
            "f(t)",
            &[
                Series { label: "truth", points: zip(&o.truth), color: BLACK, mark: Mark::Line },
                Series { label: "estimate", points: zip(&o.fitted), color: RED, mark: Mark::Line },
            ],
            false,
        )?;
        written.push(path);
    }
    Ok(written)
}

/// Everything needed for the six-panel illustration of one robust fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitPanels {
    pub signal: Signal,
    pub noise: NoiseModel,
    pub y: Vec<f64>,
    pub medians: Vec<f64>,
    pub before: WaveletPyramid,
    pub after: WaveletPyramid,
    /// Robust fit on the bin grid.
    pub fitted: Vec<f64>,
    /// Fit of the same data without binning, on the raw grid.
    pub direct: Vec<f64>,
}

/// One replicate (stream `(seed, 0)`) fitted with and without binning.
pub fn fit_panels(signal: &Signal, noise: &NoiseModel, n: usize, cfg: &EstimatorConfig, seed: u64) -> Result<FitPanels> {
    let f = signal.sample(n)?.values;
    let y = noisy_sample(&f, noise, &mut stream_rng(seed, 0));
    let robust = denoise(&y, cfg)?;
    let direct = denoise(&y, &cfg.direct())?;
    Ok(FitPanels {
        signal: *signal,
        noise: *noise,
        medians: robust.medians.medians,
        before: robust.pyramid_before,
        after: robust.pyramid_after,
        fitted: robust.fitted,
        direct: direct.fitted,
        y,
    })
}

/// Writes `panel1_noisy.svg` through `panel6_direct_fit.svg`.
pub fn emit_fit_panels(p: &FitPanels, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out_dir)?;
    let grid = |len: usize| (1..=len).map(move |i| i as f64 / len as f64);
    let on_grid = |v: &[f64]| grid(v.len()).zip(v.iter().copied()).collect::<Vec<_>>();
    let truth = |len: usize| grid(len).map(|t| (t, p.signal.eval(t))).collect::<Vec<_>>();
    let names = [
        "panel1_noisy.svg",
        "panel2_medians.svg",
        "panel3_coefficients.svg",
        "panel4_thresholded.svg",
        "panel5_fit.svg",
        "panel6_direct_fit.svg",
    ];
    let paths: Vec<PathBuf> = names.iter().map(|n| out_dir.join(n)).collect();
    let n = p.y.len();
    // clip the raw display so heavy-tailed outliers do not flatten the plot
    let lo = p.medians.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = p.medians.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 2.0 * (hi - lo).max(1.0);
    let clipped: Vec<(f64, f64)> = on_grid(&p.y).into_iter().filter(|q| q.1 > lo - pad && q.1 < hi + pad).collect();
    plot(
        &paths[0],
        &format!("noisy {} ({}, n = {n})", p.signal, p.noise),
        "t",
        "y",
        &[Series { label: "", points: clipped, color: BLACK, mark: Mark::Dots }],
        false,
    )?;
    plot(
        &paths[1],
        &format!("bin medians (T = {})", p.medians.len()),
        "t",
        "median",
        &[Series { label: "", points: on_grid(&p.medians), color: BLACK, mark: Mark::Dots }],
        false,
    )?;
    let scale_ref = p.before.details.iter().flatten().fold(0.0f64, |a, c| a.max(c.abs()));
    coefficient_plot(&paths[2], "wavelet coefficients of the medians", &p.before, scale_ref)?;
    coefficient_plot(&paths[3], "after block thresholding", &p.after, scale_ref)?;
    plot(
        &paths[4],
        "robust estimate",
        "t",
        "f(t)",
        &[
            Series { label: "truth", points: truth(p.fitted.len()), color: BLACK, mark: Mark::Line },
            Series { label: "estimate", points: on_grid(&p.fitted), color: RED, mark: Mark::Line },
        ],
        false,
    )?;
    plot(
        &paths[5],
        "direct estimate without binning",
        "t",
        "f(t)",
        &[
            Series { label: "truth", points: truth(p.direct.len()), color: BLACK, mark: Mark::Line },
            Series { label: "estimate", points: on_grid(&p.direct), color: RED, mark: Mark::Line },
        ],
        false,
    )?;
    Ok(paths)
}
