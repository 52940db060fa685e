//! `ellfit`: robust ellipse fitting from the command line.
//!
//! Exit codes: 0 success, 2 the fit itself failed (report still written),
//! 1 usage, input or I/O errors.

mod error;
mod points;
mod report;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mccvc::bench::{self, BenchReport, CampaignConfig, GroundTruth, Scenario, ScenarioConfig};
use mccvc::coupled;
use mccvc::FitConfig;
use serde::Serialize;

use error::CliError;
use report::{AssociationSummary, Conic, CoupledReport, Geometry, Kernel, SingleReport};

#[derive(Parser)]
#[command(name = "ellfit", version, about = "Robust ellipse fitting (variable-center Laplacian correntropy)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct FitArgs {
    /// CSV with `x,y` columns (an optional `label` column is used for scoring only).
    #[arg(long)]
    input: PathBuf,
    /// Ellipse margin: the fit satisfies B² − 4AC ≤ −ε².
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long = "max-iters", default_value_t = 50)]
    max_iters: usize,
    /// Stop when the correntropy objective changes by less than this.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Report path; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl FitArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            epsilon: self.epsilon,
            max_iterations: self.max_iters,
            stop_tolerance: self.tol,
            ..FitConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit one ellipse.
    FitSingle(FitArgs),
    /// Fit two concentric, similar ellipses with unknown point association.
    FitCoupled(FitArgs),
    /// Write a synthetic point file plus a `.truth.json` sidecar.
    Generate {
        #[arg(long)]
        scenario: String,
        /// Outlier fraction in [0, 0.5].
        #[arg(long, default_value_t = 0.0)]
        outliers: f64,
        /// Drawn from system entropy (and recorded) when omitted.
        #[arg(long)]
        seed: Option<u64>,
        /// Total point count (default 100, or 200 for coupled scenarios).
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run a Monte-Carlo campaign described by a JSON config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::FitSingle(args) => fit_single(&args),
        Command::FitCoupled(args) => fit_coupled(&args),
        Command::Generate { scenario, outliers, seed, points, output } => {
            generate(&scenario, outliers, seed, points, &output)
        }
        Command::Bench { config, out_dir } => run_bench(&config, &out_dir),
    }
}

fn load(args: &FitArgs, min: usize) -> Result<points::PointFile, CliError> {
    args.config().validate()?;
    let file = points::read(&args.input)?;
    if file.points.len() < min {
        return Err(CliError::Usage(format!("need ≥ {min} points, got {}", file.points.len())));
    }
    Ok(file)
}

fn emit<T: Serialize>(value: &T, output: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn status(failure: Option<&str>) -> ExitCode {
    match failure {
        None => ExitCode::SUCCESS,
        Some(reason) => {
            eprintln!("fit failed: {reason}");
            ExitCode::from(2)
        }
    }
}

fn fit_single(args: &FitArgs) -> Result<ExitCode, CliError> {
    let file = load(args, 6)?;
    let cfg = args.config();
    let fit = mccvc::fit_single(&file.points, &cfg)?;
    emit(&SingleReport::new("mcc_vc", &cfg, file.points.len(), &fit), args.output.as_deref())?;
    Ok(status(fit.failure.as_deref()))
}

fn fit_coupled(args: &FitArgs) -> Result<ExitCode, CliError> {
    let file = load(args, 12)?;
    let cfg = args.config();
    let assoc = coupled::associate(&file.points, cfg.epsilon)?;
    let inner = assoc.inner();
    let association = AssociationSummary {
        outer: inner.iter().filter(|&&i| !i).count(),
        inner: inner.iter().filter(|&&i| i).count(),
        accuracy: file
            .inner_labels
            .as_ref()
            .map(|labels| labels.iter().zip(&inner).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64),
    };
    let mut out = CoupledReport {
        schema_version: report::SCHEMA_VERSION,
        method: "mcc_vc_coupled",
        config: (&cfg).into(),
        points: file.points.len(),
        association,
        conic: None,
        eta: None,
        outer: None,
        inner: None,
        mu: None,
        kernel: None,
        iterations: 0,
        converged: false,
        failed: true,
        reason: None,
        trace: Vec::new(),
    };
    match coupled::fit_coupled_with(&file.points, assoc, &cfg) {
        Ok(fit) => {
            let r = &fit.report;
            if let (Some(conic), Some(geom)) = (fit.conic, fit.geometry) {
                let outer = conic.outer();
                let scale = 2.0 / (outer.0[0] + outer.0[2]);
                out.conic = Some(Conic::from(&outer));
                out.eta = Some(conic.eta() * scale);
                out.outer = Some(Geometry::from(&geom.outer));
                out.inner = Some(Geometry::from(&geom.inner));
                out.mu = Some(geom.mu);
            }
            out.kernel = r.kernel.map(|k| Kernel { c: k.c, sigma: k.sigma, sigma_clamped: k.sigma_clamped });
            out.iterations = r.iterations;
            out.converged = r.converged;
            out.failed = r.failed();
            out.reason = r.failure.clone();
            out.trace = r.trace.clone();
        }
        Err(e @ mccvc::Error::CoupledDegenerate { .. }) => out.reason = Some(e.to_string()),
        Err(e) => return Err(e.into()),
    }
    emit(&out, args.output.as_deref())?;
    Ok(status(out.reason.as_deref()))
}

#[derive(Serialize)]
struct Sidecar {
    schema_version: u32,
    scenario: Scenario,
    seed: u64,
    n_points: usize,
    outlier_fraction: f64,
    noise_scale_factor: f64,
    truth: TruthEcho,
    outlier_mask: Vec<bool>,
}

#[derive(Serialize)]
struct TruthEcho {
    outer: Geometry,
    #[serde(skip_serializing_if = "Option::is_none")]
    inner: Option<Geometry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
}

fn sidecar_path(output: &Path) -> PathBuf {
    output.with_extension("truth.json")
}

fn generate(
    scenario: &str,
    outliers: f64,
    seed: Option<u64>,
    n: Option<usize>,
    output: &Path,
) -> Result<ExitCode, CliError> {
    let scenario: Scenario = scenario.parse()?;
    let seed = seed.unwrap_or_else(rand::random);
    let mut cfg = ScenarioConfig::new(scenario, outliers, seed);
    if let Some(n) = n {
        cfg.n_points = n;
    }
    let data = bench::generate_scenario(&cfg)?;
    points::write(output, data.points.points(), data.inner_labels.as_deref())?;
    let truth = match data.truth {
        GroundTruth::Single { ellipse } => TruthEcho { outer: (&ellipse).into(), inner: None, mu: None },
        GroundTruth::Coupled { outer, inner, mu } => {
            TruthEcho { outer: (&outer).into(), inner: Some((&inner).into()), mu: Some(mu) }
        }
    };
    let sidecar = Sidecar {
        schema_version: report::SCHEMA_VERSION,
        scenario,
        seed,
        n_points: cfg.n_points,
        outlier_fraction: outliers,
        noise_scale_factor: cfg.noise_scale_factor,
        truth,
        outlier_mask: data.outlier_mask,
    };
    emit(&sidecar, Some(&sidecar_path(output)))?;
    Ok(ExitCode::SUCCESS)
}

fn run_bench(config: &Path, out_dir: &Path) -> Result<ExitCode, CliError> {
    let text = std::fs::read_to_string(config).map_err(|e| CliError::io(config, e))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Usage(format!("{}: expected a JSON object", config.display())))?;
    // All randomness flows from the master seed; record a fresh one if absent.
    obj.entry("master_seed").or_insert_with(|| rand::random::<u64>().into());
    let cfg: CampaignConfig = serde_json::from_value(value)?;
    let report = bench::run_campaign(&cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let json = out_dir.join("report.json");
    std::fs::write(&json, report.to_json()? + "\n").map_err(|e| CliError::io(&json, e))?;
    write_runs(&out_dir.join("runs.csv"), &report)?;
    let table = summary_table(&report);
    write_summary(&out_dir.join("summary.csv"), &report)?;
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

const PARAMS: [&str; 6] = ["g", "h", "a", "b", "theta", "mu"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_runs(path: &Path, report: &BenchReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e.into()))?;
    let mut header: Vec<String> = [
        "scenario",
        "outlier_fraction",
        "method",
        "k",
        "m",
        "seed",
        "success",
        "reason",
        "iterations",
        "converged",
        "association_error",
        "max_kkt_residual",
        "seconds",
    ]
    .map(String::from)
    .to_vec();
    header.extend(PARAMS.iter().map(|p| format!("true_{p}")));
    header.extend(PARAMS.iter().map(|p| format!("est_{p}")));
    let write = |w: &mut csv::Writer<std::fs::File>| -> csv::Result<()> {
        w.write_record(&header)?;
        for r in &report.records {
            let mut row = vec![
                r.scenario.to_string(),
                r.outlier_fraction.to_string(),
                method_name(r.method).into(),
                r.k.to_string(),
                r.m.to_string(),
                r.seed.to_string(),
                r.success.to_string(),
                r.reason.clone().unwrap_or_default(),
                r.iterations.to_string(),
                r.converged.to_string(),
                opt(r.association_error),
                r.max_kkt_residual.to_string(),
                opt(r.seconds),
            ];
            row.extend((0..PARAMS.len()).map(|i| opt(r.truth.get(i).copied())));
            row.extend((0..PARAMS.len()).map(|i| opt(r.estimate.as_ref().and_then(|e| e.get(i).copied()))));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(|e| CliError::io(path, e.into()))
}

fn write_summary(path: &Path, report: &BenchReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e.into()))?;
    let mut header: Vec<String> =
        ["scenario", "outlier_fraction", "method", "runs", "successes", "success_rate", "nrmse"]
            .map(String::from)
            .to_vec();
    header.extend(PARAMS.iter().map(|p| format!("rmse_{p}")));
    header.extend(["mean_iterations", "association_error"].map(String::from));
    let write = |w: &mut csv::Writer<std::fs::File>| -> csv::Result<()> {
        w.write_record(&header)?;
        for s in &report.summaries {
            let mut row = vec![
                s.scenario.to_string(),
                s.outlier_fraction.to_string(),
                method_name(s.method).into(),
                s.runs.to_string(),
                s.successes.to_string(),
                s.success_rate.to_string(),
                opt(s.nrmse),
            ];
            row.extend((0..PARAMS.len()).map(|i| opt(s.rmse.as_ref().and_then(|r| r.get(i).copied()))));
            row.push(s.mean_iterations.to_string());
            row.push(opt(s.association_error));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(|e| CliError::io(path, e.into()))
}

fn method_name(m: bench::Method) -> &'static str {
    match m {
        bench::Method::MccVc => "mcc_vc",
        bench::Method::Baseline => "baseline",
    }
}

fn summary_table(report: &BenchReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<20} {:>8} {:<9} {:>6} {:>9} {:>10} {:>8}",
        "scenario", "outliers", "method", "runs", "success%", "nrmse", "assoc%"
    );
    for c in &report.summaries {
        let _ = writeln!(
            s,
            "{:<20} {:>7.0}% {:<9} {:>6} {:>9.2} {:>10} {:>8}",
            c.scenario.name(),
            100.0 * c.outlier_fraction,
            method_name(c.method),
            c.runs,
            100.0 * c.success_rate,
            c.nrmse.map_or("-".into(), |v| format!("{v:.4}")),
            c.association_error.map_or("-".into(), |v| format!("{:.2}", 100.0 * v)),
        );
    }
    s
}
