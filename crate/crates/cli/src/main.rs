//! `robwav` command-line tool.

mod commands;
mod error;
mod settings;

use std::process::ExitCode;

use clap::{Arg, ArgAction, Command};

use crate::error::CliError;

const THREADS_ENV: &str = "ROBWAV_THREADS";

fn opt(id: &'static str, help: &'static str) -> Arg {
    Arg::new(id).long(id).help(help).action(ArgAction::Set)
}

fn with_default(id: &'static str, default: &'static str, help: &'static str) -> Arg {
    opt(id, help).default_value(default)
}

fn config_arg() -> Arg {
    opt("config", "TOML file of settings; keys are flag names with `_` for `-`").value_name("FILE")
}

fn out_arg() -> Arg {
    with_default("out", "robwav-out", "Output directory").value_name("DIR")
}

fn estimator_args() -> Vec<Arg> {
    vec![
        with_default("m", "8", "Target bin size"),
        with_default("filter", "d8", "Wavelet filter: haar, d8 or d16"),
        with_default("j0", "3", "Coarsest resolution level"),
        with_default("block-len", "auto", "Block length: `auto` (largest power of two <= ln n) or a positive integer"),
        with_default("lambda", "solved", "Shrinkage constant: `solved` (root > 1 of l - ln l = 3, about 4.50524) or a number"),
        with_default("level-cutoff", "all", "Highest thresholded level: `all`, `log` or `log:<b>`"),
        with_default("sigma", "calibrated", "Noise level: `calibrated` (4m/T), `literal` (8m/T) or `known:<sigma2>`"),
    ]
}

fn simulation_args(default_signal: &'static str, default_n: &'static str, default_reps: &'static str) -> Vec<Arg> {
    vec![
        with_default("signal", default_signal, "Test signal: zero, constant:<c>, linear, sine[:<freq>], spikes, doppler, blocks, bumps"),
        with_default("noise", "gaussian:1", "Noise law: gaussian:<s>, cauchy:<s>, t:<dof>:<s>, laplace:<s>, uniform:<a>"),
        with_default("n-list", default_n, "Comma-separated sample sizes"),
        with_default("reps", default_reps, "Replicates per sample size"),
        with_default("seed", "0", "Random seed"),
    ]
}

pub fn cli() -> Command {
    Command::new("robwav")
        .about("Robust wavelet regression by median binning")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .after_help(format!("Environment:\n  {THREADS_ENV}  Worker thread cap (0 = all cores)"))
        .subcommand(
            Command::new("denoise")
                .about("Fit a CSV series (column `y`, optional `f_true`) with the robust estimator")
                .arg(opt("input", "Input CSV file").value_name("FILE"))
                .args(estimator_args())
                .arg(config_arg())
                .arg(out_arg()),
        )
        .subcommand(
            Command::new("qfunc")
                .about("Estimate the signal energy from a CSV series, or tabulate the estimator's risk by simulation")
                .arg(opt("input", "Input CSV file; without it a risk table is simulated").value_name("FILE"))
                .args(estimator_args())
                .args(simulation_args("sine", "1024,4096,16384", "500"))
                .arg(config_arg())
                .arg(out_arg()),
        )
        .subcommand(
            Command::new("simulate")
                .about("Run a Monte Carlo risk experiment")
                .arg(opt("spec", "Experiment file (TOML); same keys as the flags").value_name("FILE"))
                .args(simulation_args("sine", "1024,4096,16384", "50"))
                .arg(with_default("mode", "mise", "Loss: mise, quadratic or pointwise:<t0>"))
                .args(estimator_args())
                .arg(
                    Arg::new("panels")
                        .long("panels")
                        .action(ArgAction::SetTrue)
                        .help("Also write the six-panel illustration of one fit at the largest n"),
                )
                .arg(out_arg()),
        )
        .subcommand(
            Command::new("couple")
                .about("Deterministic coupling-error profile of the standardized bin median")
                .arg(with_default("noise", "gaussian:1", "Noise law"))
                .arg(with_default("m", "9,33,129,513", "Comma-separated odd bin sizes"))
                .arg(with_default("eps", "0.5", "Profile covers |z| <= eps sqrt(m)"))
                .arg(with_default("grid", "2001", "Number of z grid points"))
                .arg(opt("kmt", "Also check the binomial coupling at these comma-separated sizes"))
                .arg(config_arg())
                .arg(out_arg()),
        )
        .subcommand(
            Command::new("caldoc")
                .about("Report how the two variance-estimator constants compare with their targets")
                .arg(with_default("noise", "gaussian:1", "Noise law"))
                .arg(with_default("n", "16384", "Sample size"))
                .arg(with_default("m", "8", "Target bin size"))
                .arg(with_default("reps", "200", "Replicates"))
                .arg(with_default("seed", "0", "Random seed"))
                .arg(config_arg())
                .arg(opt("out", "Also write the report to DIR/caldoc.txt").value_name("DIR")),
        )
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().map_err(|_| CliError::Usage {
        flag: THREADS_ENV.into(),
        message: format!("expected a non-negative integer, got `{raw}`"),
    })?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage {
                flag: THREADS_ENV.into(),
                message: e.to_string(),
            })?;
    }
    Ok(())
}

fn run() -> Result<(), CliError> {
    let command = cli();
    let matches = match command.clone().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            // --help and --version print and exit 0; everything else exits 2
            e.exit();
        }
    };
    configure_threads()?;
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let sub_command = command.find_subcommand(name).expect("parsed subcommand exists");
    commands::dispatch(name, sub, sub_command)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("robwav: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
