use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Command};

use robwav::coupling::kmt_binomial_coupling_check;
use robwav::harness::{variance_calibration, CalibrationReport};
use robwav::report::{emit_fit_panels, fit_panels, fmt_float, write_columns_csv, write_coupling_csv, write_csv, write_quadratic_csv};
use robwav::{
    coupling_error_profile, denoise, emit_report, estimate_quadratic, load_series_csv, quadratic_risk, run_experiment,
    solve_lambda_star, BlockLength, EstimatorConfig, ExperimentSpec, LevelCutoff, LossMode, NoiseModel, SigmaRule, Signal,
    VarianceConstant, WaveletFilter,
};

use crate::error::CliError;
use crate::settings::Settings;

pub fn dispatch(name: &str, matches: &ArgMatches, command: &Command) -> Result<(), CliError> {
    match name {
        "denoise" => cmd_denoise(Settings::new(matches, command, "config")?),
        "qfunc" => cmd_qfunc(Settings::new(matches, command, "config")?),
        "simulate" => cmd_simulate(Settings::new(matches, command, "spec")?),
        "couple" => cmd_couple(Settings::new(matches, command, "config")?),
        "caldoc" => cmd_caldoc(Settings::new(matches, command, "config")?),
        other => unreachable!("unknown subcommand {other}"),
    }
}

fn estimator(s: &mut Settings) -> Result<EstimatorConfig, CliError> {
    let m_target: usize = s.get("m")?;
    if m_target == 0 {
        return Err(s.reject("m", "bin size must be at least 1"));
    }
    let filter: WaveletFilter = s.get("filter")?;
    let j0: usize = s.get("j0")?;
    let block_len: BlockLength = s.get("block-len")?;
    let lambda: String = s.get("lambda")?;
    let lambda_star = if lambda == "solved" {
        solve_lambda_star()
    } else {
        match lambda.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => v,
            _ => return Err(s.reject("lambda", format!("expected `solved` or a positive number, got `{lambda}`"))),
        }
    };
    let level_cutoff: LevelCutoff = s.get("level-cutoff")?;
    let sigma_rule: SigmaRule = s.get("sigma")?;
    Ok(EstimatorConfig {
        m_target,
        filter,
        j0,
        block_len,
        lambda_star,
        level_cutoff,
        sigma_rule,
    })
}

fn out_dir(s: &mut Settings) -> Result<PathBuf, CliError> {
    let dir: PathBuf = s.get("out")?;
    fs::create_dir_all(&dir).map_err(|e| CliError::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_denoise(mut s: Settings) -> Result<(), CliError> {
    let input: PathBuf = s.get("input")?;
    let cfg = estimator(&mut s)?;
    let dir = out_dir(&mut s)?;
    s.write_echo(&dir)?;

    let series = load_series_csv(&input)?;
    let fit = denoise(&series.y, &cfg)?;
    let t = fit.plan.t;
    let grid: Vec<f64> = (1..=t).map(|i| i as f64 / t as f64).collect();
    let mut summary = format!(
        "n = {}\nT = {}\nm = {}\nusable_n = {}\nsigma2 = {}\nblock_len = {}\njstar = {}\n",
        fit.plan.n_raw,
        t,
        fit.plan.m,
        fit.plan.usable_n,
        fmt_float(fit.sigma2_used),
        fit.block_len,
        fit.jstar
    );
    match &series.f_true {
        // truth is read at the last observation of each bin
        Some(f) => {
            let truth: Vec<f64> = (1..=t).map(|i| f[i * fit.plan.m - 1]).collect();
            let mise = fit.fitted.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / t as f64;
            writeln!(summary, "mise = {}", fmt_float(mise)).expect("string write");
            write_columns_csv(&dir.join("fit.csv"), &[("t", &grid), ("fit", &fit.fitted), ("f_true", &truth)])?;
        }
        None => write_columns_csv(&dir.join("fit.csv"), &[("t", &grid), ("fit", &fit.fitted)])?,
    }
    write_columns_csv(&dir.join("medians.csv"), &[("t", &grid), ("median", &fit.medians.medians)])?;
    write_text(&dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_qfunc(mut s: Settings) -> Result<(), CliError> {
    let input: Option<PathBuf> = s.opt("input")?;
    let cfg = estimator(&mut s)?;
    match input {
        Some(input) => {
            let dir = out_dir(&mut s)?;
            s.write_echo(&dir)?;
            let series = load_series_csv(&input)?;
            let r = estimate_quadratic(&series.y, &cfg)?;
            write_csv(
                &dir.join("qfunc.csv"),
                &["q_hat", "jq", "sigma2_used", "terms_count"],
                [vec![
                    fmt_float(r.q_hat),
                    r.jq.to_string(),
                    fmt_float(r.sigma2_used),
                    r.terms_count.to_string(),
                ]],
            )?;
            println!("q_hat = {}", fmt_float(r.q_hat));
        }
        None => {
            let signal: Signal = s.get("signal")?;
            let noise: NoiseModel = s.get("noise")?;
            let n_list: Vec<usize> = s.list("n-list")?;
            let reps: usize = s.get("reps")?;
            if reps < 100 {
                return Err(s.reject("reps", "risk tables need at least 100 replicates"));
            }
            let seed: u64 = s.get("seed")?;
            let dir = out_dir(&mut s)?;
            s.write_echo(&dir)?;
            let rows = quadratic_risk(&noise, &signal, &n_list, reps, seed, &cfg)?;
            write_quadratic_csv(&dir.join("qfunc_risk.csv"), &rows)?;
            for r in &rows {
                println!("n = {:>7}  n*mse = {}  stderr = {}", r.n, fmt_float(r.n_mse), fmt_float(r.stderr));
            }
        }
    }
    Ok(())
}

fn cmd_simulate(mut s: Settings) -> Result<(), CliError> {
    let signal: Signal = s.get("signal")?;
    let noise: NoiseModel = s.get("noise")?;
    let n_list: Vec<usize> = s.list("n-list")?;
    let reps: usize = s.get("reps")?;
    let seed: u64 = s.get("seed")?;
    let mode: LossMode = s.get("mode")?;
    let estimator = estimator(&mut s)?;
    let panels_wanted = s.flag("panels")?;
    let dir = out_dir(&mut s)?;
    let spec = ExperimentSpec {
        signal,
        noise,
        n_list,
        reps,
        estimator,
        seed,
        mode,
    };
    if let Err(e) = spec.validate() {
        let id = match &e {
            robwav::Error::InvalidParameter { name, .. } if *name == "reps" => "reps",
            _ => "n-list",
        };
        return Err(s.reject(id, e.to_string()));
    }
    s.write_echo(&dir)?;
    let table = run_experiment(&spec)?;
    emit_report(&table, &dir)?;
    if panels_wanted {
        let n = *spec.n_list.last().expect("validated");
        let panels = fit_panels(&spec.signal, &spec.noise, n, &spec.estimator, spec.seed)?;
        emit_fit_panels(&panels, &dir)?;
    }
    for r in &table.rows {
        println!("n = {:>7}  risk = {}  stderr = {}", r.n, fmt_float(r.risk), fmt_float(r.stderr));
    }
    Ok(())
}

fn cmd_couple(mut s: Settings) -> Result<(), CliError> {
    let noise: NoiseModel = s.get("noise")?;
    let ms: Vec<usize> = s.list("m")?;
    if let Some(bad) = ms.iter().find(|&&m| m < 3 || m % 2 == 0) {
        return Err(s.reject("m", format!("bin sizes must be odd and at least 3, got {bad}")));
    }
    let eps: f64 = s.get("eps")?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(s.reject("eps", format!("must lie in (0, 1], got {eps}")));
    }
    let grid: usize = s.get("grid")?;
    if grid < 2 {
        return Err(s.reject("grid", "need at least 2 points"));
    }
    let kmt: Option<String> = s.opt("kmt")?;
    let kmt: Option<Vec<usize>> = match kmt {
        None => None,
        Some(raw) => Some(
            raw.split(',')
                .map(|p| p.trim().parse::<usize>().ok().filter(|&m| m > 0))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| s.reject("kmt", format!("expected positive integers, got `{raw}`")))?,
        ),
    };
    let dir = out_dir(&mut s)?;
    s.write_echo(&dir)?;
    let rows = coupling_error_profile(&noise, &ms, eps, grid)?;
    write_coupling_csv(&dir.join("coupling.csv"), &rows)?;
    for r in &rows {
        println!(
            "m = {:>5}  sup_normalized_error = {}  argmax_z = {}",
            r.m,
            fmt_float(r.sup_normalized_error),
            fmt_float(r.argmax_z)
        );
    }
    if let Some(sizes) = kmt {
        let rows = sizes
            .iter()
            .map(|&m| kmt_binomial_coupling_check(m))
            .collect::<robwav::Result<Vec<_>>>()?;
        write_csv(
            &dir.join("kmt.csv"),
            &["m", "sup_normalized_error", "argmax_x", "center_error"],
            rows.iter().map(|r| {
                vec![
                    r.m.to_string(),
                    fmt_float(r.sup_normalized_error),
                    fmt_float(r.argmax_x),
                    fmt_float(r.center_error),
                ]
            }),
        )?;
    }
    Ok(())
}

fn calibration_lines(r: &CalibrationReport, label: &str) -> String {
    format!(
        "{label}: median {:.4}, mean {:.4}, target {:.4}, relative error {:+.2}%\n",
        r.median_h_inv_sq,
        r.mean_h_inv_sq,
        r.target,
        100.0 * (r.median_h_inv_sq / r.target - 1.0)
    )
}

fn cmd_caldoc(mut s: Settings) -> Result<(), CliError> {
    let noise: NoiseModel = s.get("noise")?;
    let n: usize = s.get("n")?;
    let m: usize = s.get("m")?;
    if m == 0 {
        return Err(s.reject("m", "bin size must be at least 1"));
    }
    let reps: usize = s.get("reps")?;
    if reps == 0 {
        return Err(s.reject("reps", "must be at least 1"));
    }
    let seed: u64 = s.get("seed")?;
    let out: Option<PathBuf> = s.opt("out")?;
    let cal = variance_calibration(&noise, n, m, reps, seed, VarianceConstant::Calibrated)?;
    let lit = variance_calibration(&noise, n, m, reps, seed, VarianceConstant::PaperLiteral)?;
    let h0 = noise.density_at_zero();
    let mut text = format!(
        "Estimates of 1/h(0)^2 from adjacent bin-median pairs\n\
         noise = {noise}, n = {n}, bin size = {}, replicates = {reps}, seed = {seed}\n\
         1/h(0)^2 = {:.4}\n\
         constant 4m/T targets 1/h(0)^2; constant 8m/T targets 2/h(0)^2\n",
        cal.m,
        1.0 / (h0 * h0)
    );
    text.push_str(&calibration_lines(&cal, "4m/T"));
    text.push_str(&calibration_lines(&lit, "8m/T"));
    if cal.m % 2 == 0 {
        text.push_str("note: even bin sizes use the midpoint median, whose variance sits below 1/(4 m h(0)^2) for small m\n");
    }
    print!("{text}");
    if let Some(dir) = out {
        fs::create_dir_all(&dir).map_err(|e| CliError::Io {
            path: dir.clone(),
            source: e,
        })?;
        s.write_echo(&dir)?;
        write_text(&dir.join("caldoc.txt"), &text)?;
    }
    Ok(())
}
