//! `cbo-lab`: run the experiments behind the rescaled consensus-based
//! optimization study from a config file and emit reproducible reports.
//!
//! Exit codes: 0 success, 2 configuration error, 3 simulation abort,
//! 4 IO error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cbo_core::Error;
use cbo_lab::config::LabConfig;
use cbo_lab::experiments::{
    meanfield_error_curve, moment_trajectory_averaged, ratio_estimator_experiment,
    run_optimization_seeds, validate_params,
};
use cbo_lab::report;

/// Environment variable supplying the default worker count.
const WORKERS_ENV: &str = "CBO_WORKERS";

/// Output directory used when neither the config nor the flag names one.
const DEFAULT_OUT: &str = "cbo-results";

#[derive(Parser)]
#[command(
    name = "cbo-lab",
    version,
    about = "Rescaled consensus-based optimization lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the particle optimizer and report the rescaled terminal mean.
    Optimize(RunArgs),
    /// Measure the coupled mean-field error against ensemble size.
    Meanfield(RunArgs),
    /// Track empirical norm moments along a trajectory.
    Moments(RunArgs),
    /// Measure the weighted-ratio estimator error against batch size.
    Ratio(RunArgs),
    /// Check parameters and print diagnostics.
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file: key-value sections or JSON. Defaults apply without it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides the config file and CBO_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
}

enum Failure {
    Config(String),
    Abort(String),
    Io(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Abort(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Abort(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::SimulationAbort { .. } => Failure::Abort(e.to_string()),
            Error::Input(_) | Error::Config(_) => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    let (args, name) = match &command {
        Command::Optimize(a) => (a, "optimize"),
        Command::Meanfield(a) => (a, "meanfield"),
        Command::Moments(a) => (a, "moments"),
        Command::Ratio(a) => (a, "ratio"),
        Command::Validate(a) => (a, "validate"),
    };

    let mut cfg = match &args.config {
        Some(path) => LabConfig::load(path)?,
        None => LabConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    let workers = resolve_workers(args.workers, cfg.workers)?;
    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    report::preflight(&out).map_err(|e| {
        Failure::Io(format!(
            "output directory {} is not writable: {e}",
            out.display()
        ))
    })?;

    let objective = cfg.build_objective()?;
    let init = cfg.build_init()?;

    let files = match name {
        "optimize" => {
            let results = run_optimization_seeds(
                &objective,
                &cfg.params,
                &init,
                cfg.seed,
                cfg.optimize.seeds,
                workers,
            )?;
            let minimizer = objective.global_minimizer();
            for (i, r) in results.iter().enumerate() {
                let err = distance(&r.x_star, minimizer);
                println!(
                    "seed {}: x_star = {:?}, f(x_star) = {:.6e}, |x_star - minimizer| = {:.6e}",
                    cfg.seed.wrapping_add(i as u64),
                    r.x_star,
                    r.objective_at_x_star,
                    err
                );
            }
            let mut errors: Vec<f64> = results
                .iter()
                .map(|r| distance(&r.x_star, minimizer))
                .collect();
            errors.sort_by(f64::total_cmp);
            println!(
                "median |x_star - minimizer| = {:.6e}",
                median_of_sorted(&errors)
            );
            report::write_optimize_report(&out, &cfg, &objective, &results)?
        }
        "meanfield" => {
            let curve = meanfield_error_curve(
                &objective,
                &cfg.params,
                &init,
                &cfg.meanfield.particles_list,
                cfg.meanfield.seeds,
                cfg.meanfield.m_ref,
                cfg.meanfield.stride,
                cfg.seed,
                workers,
            )?;
            for e in &curve.entries {
                println!(
                    "N = {}: sup_t mse = {:.6e} (stderr {:.6e})",
                    e.n, e.sup_t_mse, e.sup_stderr
                );
            }
            print_fit(curve.slope, curve.intercept);
            if let Some(floor) = curve.proxy_floor {
                println!("reference-proxy floor = {floor:.6e}");
            }
            report::write_meanfield_report(&out, &cfg, &curve)?
        }
        "moments" => {
            let series = moment_trajectory_averaged(
                &objective,
                &cfg.params,
                &init,
                &cfg.moments.p_list,
                cfg.moments.stride,
                cfg.seed,
                cfg.moments.seeds,
                workers,
            )?;
            for s in &series {
                let max = s.moment.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let last = s.moment.last().copied().unwrap_or(f64::NAN);
                println!(
                    "p = {}: max moment = {:.6e}, final moment = {:.6e}",
                    s.p, max, last
                );
            }
            report::write_moments_report(&out, &cfg, &series)?
        }
        "ratio" => {
            let curve = ratio_estimator_experiment(
                &objective,
                &init,
                cfg.ratio.alpha,
                &cfg.ratio.batch_list,
                cfg.ratio.trials,
                cfg.ratio.oracle_size,
                cfg.seed,
                workers,
            )?;
            for e in &curve.entries {
                println!("N = {}: mse = {:.6e}", e.n, e.mse);
            }
            print_fit(curve.slope, curve.intercept);
            report::write_ratio_report(&out, &cfg, &curve)?
        }
        "validate" => {
            let diagnostics = validate_params(&cfg.params, cfg.validate.level)?;
            println!("parameter ranges: ok");
            if let Some(holds) = diagnostics.drift_condition_holds {
                println!(
                    "lambda > 3*sigma^2: {}",
                    if holds { "holds" } else { "violated" }
                );
            }
            if let Some(below) = diagnostics.kappa_below_surrogate {
                println!(
                    "kappa < {} (surrogate threshold): {}",
                    diagnostics.kappa_surrogate_threshold,
                    if below { "holds" } else { "violated" }
                );
            }
            for warning in &diagnostics.warnings {
                println!("warning: {warning}");
            }
            report::write_validate_report(&out, &cfg, &diagnostics)?
        }
        _ => unreachable!("commands are enumerated above"),
    };

    for file in files {
        println!("wrote {}", file.display());
    }
    Ok(())
}

fn resolve_workers(flag: Option<usize>, config: Option<usize>) -> Result<usize, Failure> {
    if let Some(w) = flag.or(config) {
        if w == 0 {
            return Err(Failure::Config("workers must be at least 1".to_string()));
        }
        return Ok(w);
    }
    match std::env::var(WORKERS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(1),
        Err(e) => Err(Failure::Config(format!("{WORKERS_ENV}: {e}"))),
        Ok(text) => match text.trim().parse::<usize>() {
            Ok(w) if w >= 1 => Ok(w),
            _ => Err(Failure::Config(format!(
                "{WORKERS_ENV} must be a positive integer, got '{text}'"
            ))),
        },
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Median of an already sorted, nonempty slice.
fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn print_fit(slope: Option<f64>, intercept: Option<f64>) {
    match (slope, intercept) {
        (Some(s), Some(b)) => println!("log-log fit: slope = {s:.4}, intercept = {b:.4}"),
        _ => println!("log-log fit: undefined (needs two sizes with positive error)"),
    }
}
