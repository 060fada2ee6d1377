//! Report emission: `result.json` with the reproducibility envelope, one
//! CSV per curve or series, and a gnuplot script that renders the
//! experiment's figure from those CSVs.
//!
//! Everything written here is a pure function of the resolved config and
//! the experiment output: no timestamps, no hostnames, no worker counts.
//! JSON object keys are sorted and floats are written in deterministic
//! round-trip form, so a fixed seed produces byte-identical files across
//! executions and worker counts. CSV floats carry 17 significant digits
//! (exact for doubles); JSON floats use the shortest exact representation.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use cbo_core::randomness::{NoisePlan, PurposeTag};
use cbo_core::ObjectiveSpec;
use serde_json::{json, Value};

use crate::config::LabConfig;
use crate::experiments::{
    MeanFieldCurve, MomentSeries, OptimizationResult, ParamDiagnostics, RatioMseCurve,
    ValidationLevel,
};

/// Version string embedded in every report.
pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION"));

/// Creates the output directory and proves it is writable by writing and
/// removing a probe file. Run before any simulation starts, so a bad
/// output path fails in milliseconds, not after minutes of computing.
pub fn preflight(out: &Path) -> io::Result<()> {
    fs::create_dir_all(out)?;
    let probe = out.join(".write-probe");
    fs::write(&probe, b"probe")?;
    fs::remove_file(&probe)
}

/// 17 significant digits: one leading digit plus 16 after the point.
fn csv_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(out: &Path, name: &str, contents: &str) -> io::Result<PathBuf> {
    let path = out.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn write_result_json(
    out: &Path,
    cfg: &LabConfig,
    command: &str,
    report: Value,
) -> io::Result<PathBuf> {
    let envelope = json!({
        "version": VERSION,
        "command": command,
        "seed": cfg.seed,
        "config": cfg.echo(),
        "report": report,
    });
    let mut text = serde_json::to_string_pretty(&envelope).expect("report values are plain JSON");
    text.push('\n');
    write_file(out, "result.json", &text)
}

fn optional(v: Option<f64>) -> Value {
    match v {
        Some(x) => Value::from(x),
        None => Value::Null,
    }
}

// ---------------------------------------------------------------------------
// optimize
// ---------------------------------------------------------------------------

/// Writes `result.json`, the per-seed `optimize.csv`, the plot-support
/// CSVs (objective curve and initial histogram, for one-dimensional runs),
/// and `plot.gp`.
pub fn write_optimize_report(
    out: &Path,
    cfg: &LabConfig,
    objective: &ObjectiveSpec,
    results: &[OptimizationResult],
) -> io::Result<Vec<PathBuf>> {
    let d = cfg.params.dim;
    let seeds: Vec<u64> = (0..results.len())
        .map(|i| cfg.seed.wrapping_add(i as u64))
        .collect();

    let entries: Vec<Value> = results
        .iter()
        .zip(&seeds)
        .map(|(r, &seed)| {
            json!({
                "seed": seed,
                "x_star": r.x_star,
                "raw_mean": r.raw_mean,
                "final_consensus": r.final_consensus,
                "objective_at_x_star": r.objective_at_x_star,
            })
        })
        .collect();
    let report = json!({
        "objective": {
            "name": objective.name(),
            "minimizer": objective.global_minimizer(),
            "min_value": objective.min_value(),
        },
        "results": entries,
    });

    let mut files = vec![write_result_json(out, cfg, "optimize", report)?];

    let mut csv = String::from("seed,f_at_x_star");
    for prefix in ["x_star", "raw_mean", "consensus"] {
        for k in 1..=d {
            csv.push_str(&format!(",{prefix}_{k}"));
        }
    }
    csv.push('\n');
    for (r, &seed) in results.iter().zip(&seeds) {
        csv.push_str(&format!("{seed},{}", csv_f64(r.objective_at_x_star)));
        for v in r.x_star.iter().chain(&r.raw_mean).chain(&r.final_consensus) {
            csv.push(',');
            csv.push_str(&csv_f64(*v));
        }
        csv.push('\n');
    }
    files.push(write_file(out, "optimize.csv", &csv)?);

    if d == 1 {
        files.extend(write_optimize_plot_support(out, cfg, objective, results)?);
        files.push(write_file(out, "plot.gp", &optimize_plot_script())?);
    } else {
        files.push(write_file(
            out,
            "plot.gp",
            "# The optimize figure is generated for one-dimensional runs only.\n",
        )?);
    }
    Ok(files)
}

/// Objective curve and initial-sample histogram over a window covering
/// the initial ensemble, the minimizer, and every reported estimate.
fn write_optimize_plot_support(
    out: &Path,
    cfg: &LabConfig,
    objective: &ObjectiveSpec,
    results: &[OptimizationResult],
) -> io::Result<Vec<PathBuf>> {
    let init = cfg
        .build_init()
        .expect("config was validated at parse time");
    let plan =
        NoisePlan::new(cfg.seed, PurposeTag::Initial, 1).expect("dimension 1 is always valid");
    let sample = plan
        .sample_initial(&init, cfg.params.n_particles)
        .expect("validated distribution");

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in sample
        .iter()
        .chain(&[objective.global_minimizer()[0]])
        .chain(results.iter().map(|r| &r.x_star[0]))
    {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let pad = 0.1 * (hi - lo).max(1.0);
    let (lo, hi) = (lo - pad, hi + pad);

    let mut curve = String::from("x,f\n");
    let points = 400;
    for i in 0..=points {
        let x = lo + (hi - lo) * i as f64 / points as f64;
        let f = objective.eval_unchecked(&[x]);
        curve.push_str(&format!("{},{}\n", csv_f64(x), csv_f64(f)));
    }

    let bins = 60usize;
    let sample_lo = sample.iter().cloned().fold(f64::INFINITY, f64::min);
    let sample_hi = sample.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = ((sample_hi - sample_lo) / bins as f64).max(f64::MIN_POSITIVE);
    let mut counts = vec![0usize; bins];
    for &v in &sample {
        let bin = (((v - sample_lo) / width) as usize).min(bins - 1);
        counts[bin] += 1;
    }
    let mut hist = String::from("bin_center,density\n");
    let norm = 1.0 / (sample.len() as f64 * width);
    for (b, &count) in counts.iter().enumerate() {
        let center = sample_lo + (b as f64 + 0.5) * width;
        hist.push_str(&format!(
            "{},{}\n",
            csv_f64(center),
            csv_f64(count as f64 * norm)
        ));
    }

    Ok(vec![
        write_file(out, "optimize_objective.csv", &curve)?,
        write_file(out, "optimize_init.csv", &hist)?,
    ])
}

fn optimize_plot_script() -> String {
    "# Render with: gnuplot plot.gp (expects the CSVs beside this script).\n\
     set datafile separator ','\n\
     set terminal pngcairo size 900,600\n\
     set output 'optimize.png'\n\
     set xlabel 'x'\n\
     set ylabel 'f(x) and initial density'\n\
     set key top right\n\
     plot 'optimize_objective.csv' skip 1 using 1:2 with lines lw 2 title 'objective', \\\n\
     \x20    'optimize_init.csv' skip 1 using 1:2 with boxes fill transparent solid 0.3 title 'initial density', \\\n\
     \x20    'optimize.csv' skip 1 using 3:2 with points pt 7 ps 1.5 title 'x* per seed'\n"
        .to_string()
}

// ---------------------------------------------------------------------------
// meanfield
// ---------------------------------------------------------------------------

/// Writes `result.json`, the curve CSV (`N,sup_t_mse,stderr`), the
/// per-time CSV, and the log-log plot script.
pub fn write_meanfield_report(
    out: &Path,
    cfg: &LabConfig,
    curve: &MeanFieldCurve,
) -> io::Result<Vec<PathBuf>> {
    let entries: Vec<Value> = curve
        .entries
        .iter()
        .map(|e| {
            json!({
                "n": e.n,
                "sup_t_mse": e.sup_t_mse,
                "sup_stderr": e.sup_stderr,
                "per_time_mse": e.per_time_mse,
            })
        })
        .collect();
    let report = json!({
        "entries": entries,
        "slope": optional(curve.slope),
        "intercept": optional(curve.intercept),
        "proxy_floor": optional(curve.proxy_floor),
        "m_ref": curve.m_ref,
        "seeds_used": curve.seeds_used,
    });
    let mut files = vec![write_result_json(out, cfg, "meanfield", report)?];

    let mut csv = String::from("N,sup_t_mse,stderr\n");
    for e in &curve.entries {
        csv.push_str(&format!(
            "{},{},{}\n",
            e.n,
            csv_f64(e.sup_t_mse),
            csv_f64(e.sup_stderr)
        ));
    }
    files.push(write_file(out, "meanfield.csv", &csv)?);

    let mut times_csv = String::from("time");
    for e in &curve.entries {
        times_csv.push_str(&format!(",mse_n{}", e.n));
    }
    times_csv.push('\n');
    let rows = curve.entries.first().map_or(0, |e| e.per_time_mse.len());
    for row in 0..rows {
        times_csv.push_str(&csv_f64(curve.entries[0].per_time_mse[row].0));
        for e in &curve.entries {
            times_csv.push(',');
            times_csv.push_str(&csv_f64(e.per_time_mse[row].1));
        }
        times_csv.push('\n');
    }
    files.push(write_file(out, "meanfield_times.csv", &times_csv)?);

    files.push(write_file(
        out,
        "plot.gp",
        &loglog_plot_script(
            "meanfield",
            "ensemble size N",
            "sup_t coupled MSE",
            "yerrorbars",
            curve.slope.zip(curve.intercept),
        ),
    )?);
    Ok(files)
}

/// Log-log scatter plus the fitted power law, shared by the curve
/// experiments. `style` is the gnuplot style for the data points.
fn loglog_plot_script(
    stem: &str,
    xlabel: &str,
    ylabel: &str,
    style: &str,
    fit: Option<(f64, f64)>,
) -> String {
    let mut script = format!(
        "# Render with: gnuplot plot.gp (expects the CSVs beside this script).\n\
         set datafile separator ','\n\
         set terminal pngcairo size 900,600\n\
         set output '{stem}.png'\n\
         set logscale xy\n\
         set xlabel '{xlabel}'\n\
         set ylabel '{ylabel}'\n\
         set key top right\n\
         plot '{stem}.csv' skip 1 using 1:2{cols} with {style} pt 7 title 'measured'",
        cols = if style == "yerrorbars" { ":3" } else { "" },
    );
    if let Some((slope, intercept)) = fit {
        script.push_str(&format!(
            ", \\\n     exp({intercept}) * x**({slope}) with lines dashtype 2 \
             title 'fit: N^{{{slope:.3}}}'"
        ));
    }
    script.push('\n');
    script
}

// ---------------------------------------------------------------------------
// moments
// ---------------------------------------------------------------------------

/// Writes `result.json`, the wide-format series CSV, and a time-series
/// plot script.
pub fn write_moments_report(
    out: &Path,
    cfg: &LabConfig,
    series: &[MomentSeries],
) -> io::Result<Vec<PathBuf>> {
    let payload: Vec<Value> = series
        .iter()
        .map(|s| {
            json!({
                "p": s.p,
                "times": s.times,
                "moment": s.moment,
                "consensus_moment": s.consensus_moment,
            })
        })
        .collect();
    let mut files = vec![write_result_json(
        out,
        cfg,
        "moments",
        json!({ "series": payload }),
    )?];

    let mut csv = String::from("time");
    for s in series {
        csv.push_str(&format!(",moment_p{},consensus_p{}", s.p, s.p));
    }
    csv.push('\n');
    let rows = series.first().map_or(0, |s| s.times.len());
    for row in 0..rows {
        csv.push_str(&csv_f64(series[0].times[row]));
        for s in series {
            csv.push_str(&format!(
                ",{},{}",
                csv_f64(s.moment[row]),
                csv_f64(s.consensus_moment[row])
            ));
        }
        csv.push('\n');
    }
    files.push(write_file(out, "moments.csv", &csv)?);

    let mut script = String::from(
        "# Render with: gnuplot plot.gp (expects the CSVs beside this script).\n\
         set datafile separator ','\n\
         set terminal pngcairo size 900,600\n\
         set output 'moments.png'\n\
         set xlabel 'time'\n\
         set ylabel 'empirical norm moments'\n\
         set key top right\n\
         plot ",
    );
    let mut first = true;
    for (i, s) in series.iter().enumerate() {
        if !first {
            script.push_str(", \\\n     ");
        }
        first = false;
        script.push_str(&format!(
            "'moments.csv' skip 1 using 1:{} with lines title 'mean |X|^{p}', \\\n     \
             'moments.csv' skip 1 using 1:{} with lines dashtype 2 title '|m|^{p}'",
            2 * i + 2,
            2 * i + 3,
            p = s.p,
        ));
    }
    script.push('\n');
    files.push(write_file(out, "plot.gp", &script)?);
    Ok(files)
}

// ---------------------------------------------------------------------------
// ratio
// ---------------------------------------------------------------------------

/// Writes `result.json`, the curve CSV (`N,mse`), and the log-log plot
/// script.
pub fn write_ratio_report(
    out: &Path,
    cfg: &LabConfig,
    curve: &RatioMseCurve,
) -> io::Result<Vec<PathBuf>> {
    let entries: Vec<Value> = curve
        .entries
        .iter()
        .map(|e| json!({ "n": e.n, "mse": e.mse }))
        .collect();
    let report = json!({
        "entries": entries,
        "slope": optional(curve.slope),
        "intercept": optional(curve.intercept),
        "reference_r": curve.reference_r,
        "oracle_sample_size": curve.oracle_sample_size,
    });
    let mut files = vec![write_result_json(out, cfg, "ratio", report)?];

    let mut csv = String::from("N,mse\n");
    for e in &curve.entries {
        csv.push_str(&format!("{},{}\n", e.n, csv_f64(e.mse)));
    }
    files.push(write_file(out, "ratio.csv", &csv)?);

    files.push(write_file(
        out,
        "plot.gp",
        &loglog_plot_script(
            "ratio",
            "batch size N",
            "estimator MSE",
            "points",
            curve.slope.zip(curve.intercept),
        ),
    )?);
    Ok(files)
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

/// Writes `result.json` with the diagnostics; no CSV or plot.
pub fn write_validate_report(
    out: &Path,
    cfg: &LabConfig,
    diagnostics: &ParamDiagnostics,
) -> io::Result<Vec<PathBuf>> {
    let report = json!({
        "level": match diagnostics.level {
            ValidationLevel::Basic => "basic",
            ValidationLevel::Theorem => "theorem",
        },
        "drift_condition_holds": diagnostics.drift_condition_holds,
        "kappa_below_surrogate": diagnostics.kappa_below_surrogate,
        "kappa_surrogate_threshold": diagnostics.kappa_surrogate_threshold,
        "warnings": diagnostics.warnings,
    });
    Ok(vec![write_result_json(out, cfg, "validate", report)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{MeanFieldEntry, RatioEntry};

    fn tmp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("cbo-lab-report-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    #[test]
    fn preflight_creates_nested_directories() {
        let dir = tmp_dir("preflight").join("a/b/c");
        preflight(&dir).unwrap();
        assert!(dir.is_dir());
        assert!(!dir.join(".write-probe").exists());
    }

    #[test]
    fn csv_floats_have_seventeen_significant_digits_and_round_trip() {
        assert_eq!(csv_f64(3.0), "3.0000000000000000e0");
        assert_eq!(csv_f64(-0.15625), "-1.5625000000000000e-1");
        for &v in &[
            1.0 / 3.0,
            2.0f64.sqrt() * 1e-7,
            12345.678901234567,
            f64::MIN_POSITIVE,
        ] {
            assert_eq!(csv_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn meanfield_csv_layout_is_stable_row_for_row() {
        let dir = tmp_dir("meanfield");
        preflight(&dir).unwrap();
        let cfg = LabConfig::default();
        let entry = |n: usize, v: f64| MeanFieldEntry {
            n,
            sup_t_mse: v,
            sup_stderr: v / 10.0,
            per_time_mse: vec![(0.0, 0.0), (0.5, v)],
        };
        let curve = MeanFieldCurve {
            entries: vec![
                entry(100, 1e-4),
                entry(200, 5e-5),
                entry(400, 2.5e-5),
                entry(800, 1.2e-5),
            ],
            slope: Some(-1.02),
            intercept: Some(-4.5),
            seeds_used: 4,
            m_ref: 80_000,
            proxy_floor: Some(1e-9),
        };
        let files = write_meanfield_report(&dir, &cfg, &curve).unwrap();
        assert!(files.iter().any(|f| f.ends_with("meanfield.csv")));
        let csv = fs::read_to_string(dir.join("meanfield.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "N,sup_t_mse,stderr");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("100,"));

        let times = fs::read_to_string(dir.join("meanfield_times.csv")).unwrap();
        assert!(times.starts_with("time,mse_n100,mse_n200,mse_n400,mse_n800\n"));

        let plot = fs::read_to_string(dir.join("plot.gp")).unwrap();
        assert!(plot.contains("logscale xy"));
        assert!(plot.contains("exp(-4.5) * x**(-1.02)"));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn empty_series_still_produce_valid_files() {
        let dir = tmp_dir("empty");
        preflight(&dir).unwrap();
        let cfg = LabConfig::default();
        let series = vec![MomentSeries {
            p: 2,
            times: vec![],
            moment: vec![],
            consensus_moment: vec![],
        }];
        write_moments_report(&dir, &cfg, &series).unwrap();
        let json: Value =
            serde_json::from_str(&fs::read_to_string(dir.join("result.json")).unwrap()).unwrap();
        assert_eq!(json["report"]["series"][0]["times"], json!([]));
        assert_eq!(json["version"], VERSION);
        assert_eq!(json["seed"], cfg.seed);
        assert!(json["config"]["params"]["lambda"].is_number());
        let csv = fs::read_to_string(dir.join("moments.csv")).unwrap();
        assert_eq!(csv, "time,moment_p2,consensus_p2\n");
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn ratio_report_serializes_missing_fit_as_null() {
        let dir = tmp_dir("ratio");
        preflight(&dir).unwrap();
        let cfg = LabConfig::default();
        let curve = RatioMseCurve {
            entries: vec![RatioEntry { n: 64, mse: 0.0 }],
            slope: None,
            intercept: None,
            reference_r: vec![2.5],
            oracle_sample_size: 64,
        };
        write_ratio_report(&dir, &cfg, &curve).unwrap();
        let json: Value =
            serde_json::from_str(&fs::read_to_string(dir.join("result.json")).unwrap()).unwrap();
        assert!(json["report"]["slope"].is_null());
        let plot = fs::read_to_string(dir.join("plot.gp")).unwrap();
        assert!(!plot.contains("fit:"));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn repeated_writes_are_byte_identical() {
        let dir_a = tmp_dir("golden-a");
        let dir_b = tmp_dir("golden-b");
        preflight(&dir_a).unwrap();
        preflight(&dir_b).unwrap();
        let cfg = LabConfig::parse_str("seed = 5\n[validate]\nlevel = theorem\n").unwrap();
        let diag = crate::experiments::validate_params(
            &cfg.params,
            crate::experiments::ValidationLevel::Theorem,
        )
        .unwrap();
        write_validate_report(&dir_a, &cfg, &diag).unwrap();
        write_validate_report(&dir_b, &cfg, &diag).unwrap();
        let a = fs::read(dir_a.join("result.json")).unwrap();
        let b = fs::read(dir_b.join("result.json")).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
        fs::remove_dir_all(&dir_a).unwrap();
        fs::remove_dir_all(&dir_b).unwrap();
    }
}
