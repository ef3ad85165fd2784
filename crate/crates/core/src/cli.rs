//! The `netflow` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input or failed check,
//! 3 a run stopped before its horizon under `--expect-horizon`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::json;

use crate::error::Error;
use crate::geometry::{self, TriodState};
use crate::io::{self, IoError, Network, NetworkFile, Trajectory, TrajectoryFormat};
use crate::linearized::{default_lambda_samples, lopatinskii_shapiro_check, FrozenCoefficients};
use crate::oracles;
use crate::reparam;
use crate::solver::{self, FlowConfig, StopReason};

#[derive(Debug, Parser)]
#[command(name = "netflow", version, about = "Curvature flow of triple-junction networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve a network and write its trajectory.
    Run(RunArgs),
    /// Check the junction boundary condition for well-posedness.
    CheckWellposed {
        #[arg(long)]
        network: PathBuf,
        /// Complex samples `re,im;re,im;...` with positive real part.
        #[arg(long, value_parser = parse_lambdas)]
        lambda: Option<LambdaList>,
    },
    /// Print geometric diagnostics and the junction residuals.
    Diagnose {
        #[arg(long)]
        network: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        angle_tol: f64,
    },
    /// Evolve a network and its constant-speed resampling side by side and
    /// report the Hausdorff distance between them.
    Compare(CompareArgs),
    /// Write a reference network.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
struct FlowArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long, value_enum)]
    resample: Option<Switch>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    flow: FlowArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: TrajectoryFormat,
    #[arg(long)]
    expect_horizon: bool,
    /// Run K copies with dt, dt/2, ..., dt/2^(K-1) in parallel.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=16))]
    sweep: Option<u32>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    flow: FlowArgs,
    /// CSV with columns `time,hausdorff`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleName {
    Steiner,
    Circle,
    Bumped,
    Infeasible,
    ParallelTangents,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(value_enum)]
    name: OracleName,
    #[arg(long, default_value_t = 64)]
    cells: usize,
    /// Circle radius.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Steiner endpoints `x,y;x,y;x,y` (default: third roots of unity).
    #[arg(long)]
    endpoints: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone)]
struct LambdaList(Vec<Complex64>);

fn parse_lambdas(s: &str) -> Result<LambdaList, String> {
    let mut out = Vec::new();
    for item in s.split(';').filter(|t| !t.trim().is_empty()) {
        let parts: Vec<&str> = item.split(',').map(str::trim).collect();
        let (re, im) = match parts.as_slice() {
            [re] => (*re, "0"),
            [re, im] => (*re, *im),
            _ => return Err(format!("expected `re,im`, got {item:?}")),
        };
        let re: f64 = re.parse().map_err(|_| format!("bad real part {re:?}"))?;
        let im: f64 = im.parse().map_err(|_| format!("bad imaginary part {im:?}"))?;
        if !(re > 0.0) || !im.is_finite() || !re.is_finite() {
            return Err(format!("λ = {re}{im:+}i must have positive real part"));
        }
        out.push(Complex64::new(re, im));
    }
    if out.is_empty() {
        return Err("empty λ list".into());
    }
    Ok(LambdaList(out))
}

fn parse_points(s: &str) -> Result<[ndarray::Array1<f64>; 3], String> {
    let pts: Vec<ndarray::Array1<f64>> = s
        .split(';')
        .map(|p| {
            p.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad coordinate {v:?}")))
                .collect::<Result<Vec<f64>, String>>()
                .map(ndarray::Array1::from)
        })
        .collect::<Result<_, _>>()?;
    if pts.len() != 3 || pts.iter().any(|p| p.len() != pts[0].len() || p.len() < 2) {
        return Err("expected three points of equal dimension".into());
    }
    let [a, b, c]: [ndarray::Array1<f64>; 3] = pts.try_into().expect("checked length");
    Ok([a, b, c])
}

/// A failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

fn error_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::GridTooCoarse { .. }
        | Error::Shape(_)
        | Error::NonFinite { .. }
        | Error::Regularity { .. }
        | Error::Concurrency { .. }
        | Error::InvalidLambda { .. }
        | Error::InadmissibleInitialData { .. }
        | Error::InfeasibleSteiner { .. } => 2,
        _ => 1,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: error_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let code = match e {
            IoError::Io { .. } => 1,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

type CliResult = std::result::Result<i32, Failure>;

/// Sets up logging from `NETFLOW_LOG` (default `warn`).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("NETFLOW_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

/// Runs the driver on `argv` (program name first), printing to stdout.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    main_with_output(argv, &mut out)
}

/// As [`main`], printing reports to `out` and errors to stderr.
pub fn main_with_output<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| dispatch(cli, out)));
    match result {
        Ok(Ok(code)) => code,
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            f.code
        }
        Err(_) => {
            eprintln!("error: internal failure");
            1
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::Run(args) => cmd_run(args, out),
        Command::CheckWellposed { network, lambda } => cmd_check(&network, lambda, out),
        Command::Diagnose { network, angle_tol } => cmd_diagnose(&network, angle_tol, out),
        Command::Compare(args) => cmd_compare(args, out),
        Command::Oracle(args) => cmd_oracle(args, out),
    }
}

/// Defaults, overridden by the config file, overridden by flags.
fn effective_config(flow: &FlowArgs) -> std::result::Result<FlowConfig, Failure> {
    let mut config = match &flow.config {
        Some(p) => io::load_config(p)?,
        None => FlowConfig::default(),
    };
    if let Some(v) = flow.t_end {
        config.t_end = v;
    }
    if let Some(v) = flow.dt {
        config.dt = v;
    }
    if let Some(v) = flow.cells {
        config.n_cells = Some(v);
    }
    if let Some(s) = flow.resample {
        config.resample = s == Switch::On;
    }
    config.validate()?;
    Ok(config)
}

struct Outcome {
    trajectory: Trajectory,
    stop: StopReason,
    config: FlowConfig,
    steps: usize,
}

fn evolve(network: &Network, config: &FlowConfig) -> crate::Result<Outcome> {
    Ok(match network {
        Network::Triod(t) => {
            let o = solver::run(t, config)?;
            Outcome {
                trajectory: Trajectory::from_triod_run(&o),
                stop: o.stop,
                config: o.config.clone(),
                steps: o.reports.len(),
            }
        }
        Network::Curve(c) => {
            let o = solver::run_curve(c, config)?;
            Outcome {
                trajectory: Trajectory::from_curve_run(&o),
                stop: o.stop,
                config: o.config.clone(),
                steps: o.reports.len(),
            }
        }
    })
}

fn print_outcome(out: &mut dyn Write, label: &str, o: &Outcome) -> std::io::Result<()> {
    writeln!(out, "{label}stop: {}", o.stop)?;
    if let Some(r) = o.trajectory.records.last() {
        let rep = &r.report;
        let lengths: Vec<String> = rep.lengths.iter().map(|l| format!("{l:.10}")).collect();
        writeln!(out, "{label}steps: {}", o.steps)?;
        writeln!(out, "{label}time: {}", rep.time)?;
        writeln!(out, "{label}lengths: {}", lengths.join(" "))?;
        writeln!(out, "{label}total_length: {:.12}", rep.total_length)?;
        writeln!(out, "{label}l2_curvature: {:.6e}", rep.l2_curvature)?;
        writeln!(out, "{label}angle_residual: {:.3e}", rep.angle_residual)?;
        writeln!(out, "{label}min_speed: {:.6e}", rep.min_speed)?;
    }
    Ok(())
}

fn write_outputs(path: &Path, format: TrajectoryFormat, network: &Path, o: &Outcome) -> std::result::Result<(), Failure> {
    io::save_trajectory(&o.trajectory, path, format)?;
    let meta = json!({
        "network": network.display().to_string(),
        "config": o.config,
        "stop": o.stop.to_string(),
        "steps": o.steps,
        "format": match format { TrajectoryFormat::Csv => "csv", TrajectoryFormat::Jsonl => "jsonl" },
    });
    let meta_path = io::sidecar_path(path, ".meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("metadata serialises") + "\n")
        .map_err(|e| Failure {
            code: 1,
            message: format!("{}: {e}", meta_path.display()),
        })
}

fn sweep_path(path: &Path, k: u32) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.sweep{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}.sweep{k}"),
    };
    path.with_file_name(name)
}

fn cmd_run(args: RunArgs, out: &mut dyn Write) -> CliResult {
    let config = effective_config(&args.flow)?;
    let network = io::load_any(&args.flow.network)?;
    let Some(k) = args.sweep else {
        let o = evolve(&network, &config)?;
        print_outcome(out, "", &o)?;
        if let Some(path) = &args.out {
            write_outputs(path, args.format, &args.flow.network, &o)?;
        }
        return Ok(if args.expect_horizon && o.stop != StopReason::HorizonReached { 3 } else { 0 });
    };

    let results: Vec<crate::Result<Outcome>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..k)
            .map(|i| {
                let mut c = config.clone();
                c.dt = config.dt / f64::powi(2.0, i as i32);
                let net = &network;
                s.spawn(move || evolve(net, &c))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Config("sweep worker panicked".into()))))
            .collect()
    });
    let mut code = 0;
    for (i, r) in results.into_iter().enumerate() {
        let o = r?;
        writeln!(out, "[sweep {i}] dt: {:e}", o.config.dt)?;
        print_outcome(out, &format!("[sweep {i}] "), &o)?;
        if let Some(path) = &args.out {
            write_outputs(&sweep_path(path, i as u32), args.format, &args.flow.network, &o)?;
        }
        if args.expect_horizon && o.stop != StopReason::HorizonReached {
            code = 3;
        }
    }
    Ok(code)
}

fn cmd_check(path: &Path, lambda: Option<LambdaList>, out: &mut dyn Write) -> CliResult {
    let triod = io::load_network(path)?;
    let lambdas = lambda.map_or_else(default_lambda_samples, |l| l.0);
    let coeffs = FrozenCoefficients::new(triod)?;
    let report = lopatinskii_shapiro_check(&coeffs, &lambdas)?;
    for s in &report.samples {
        writeln!(
            out,
            "lambda {}{:+}i: min singular value {:.6e}",
            s.lambda.re, s.lambda.im, s.min_singular_value
        )?;
    }
    writeln!(out, "endpoint operator: min singular value {:.6e}", report.endpoint_min_singular_value)?;
    writeln!(out, "threshold: {:e}", report.threshold)?;
    if report.passed() {
        writeln!(out, "PASS")?;
        Ok(0)
    } else {
        writeln!(out, "FAIL")?;
        Ok(2)
    }
}

fn diagnose_triod(t: &TriodState, angle_tol: f64, out: &mut dyn Write) -> CliResult {
    let r = geometry::junction_residuals(t)?;
    let lengths = t.lengths()?;
    writeln!(out, "cells: {}", t.n_cells())?;
    writeln!(out, "dimension: {}", t.dim())?;
    writeln!(out, "lengths: {:.10} {:.10} {:.10}", lengths[0], lengths[1], lengths[2])?;
    writeln!(out, "total_length: {:.12}", t.total_length()?)?;
    writeln!(out, "l2_curvature: {:.6e}", geometry::l2_curvature(t)?)?;
    writeln!(out, "min_speed: {:.6e}", t.min_speed())?;
    writeln!(out, "concurrency_residual: {:.3e}", r.concurrency_residual)?;
    writeln!(out, "angle_residual: {:.3e} (tolerance {angle_tol:e})", r.angle_residual)?;
    for (i, tau) in geometry::junction_tangents(t)?.iter().enumerate() {
        writeln!(out, "tangent {}: {}", i + 1, tau.iter().map(|v| format!("{v:.9}")).collect::<Vec<_>>().join(" "))?;
    }
    if r.admissible(angle_tol) {
        writeln!(out, "admissible")?;
        Ok(0)
    } else {
        writeln!(out, "not admissible")?;
        Ok(2)
    }
}

fn cmd_diagnose(path: &Path, angle_tol: f64, out: &mut dyn Write) -> CliResult {
    if !(angle_tol > 0.0) {
        return Err(Failure::usage("--angle-tol must be positive"));
    }
    match io::load_any(path)? {
        Network::Triod(t) => diagnose_triod(&t, angle_tol, out),
        Network::Curve(c) => {
            writeln!(out, "cells: {}", c.n_cells())?;
            writeln!(out, "length: {:.12}", geometry::length(&c)?)?;
            writeln!(out, "l2_curvature: {:.6e}", geometry::curve_l2_curvature_squared(&c)?.sqrt())?;
            writeln!(out, "min_speed: {:.6e}", c.min_speed())?;
            Ok(0)
        }
    }
}

fn cmd_compare(args: CompareArgs, out: &mut dyn Write) -> CliResult {
    let config = effective_config(&args.flow)?;
    let Network::Triod(a) = io::load_any(&args.flow.network)? else {
        return Err(Failure::usage("compare needs a triod network"));
    };
    let b = reparam::resample_triod(&a, a.n_cells())?;
    let (ra, rb) = std::thread::scope(|s| {
        let ha = s.spawn(|| solver::run(&a, &config));
        let hb = s.spawn(|| solver::run(&b, &config));
        (
            ha.join().unwrap_or_else(|_| Err(Error::Config("worker panicked".into()))),
            hb.join().unwrap_or_else(|_| Err(Error::Config("worker panicked".into()))),
        )
    });
    let (ra, rb) = (ra?, rb?);
    let mut rows = Vec::new();
    for (sa, sb) in ra.snapshots.iter().zip(&rb.snapshots) {
        if sa.state.time() != sb.state.time() {
            break;
        }
        rows.push((sa.state.time(), reparam::triod_hausdorff(&sa.state, &sb.state)));
    }
    writeln!(out, "stop: {} / {}", ra.stop, rb.stop)?;
    if let Some(&(t, h)) = rows.last() {
        writeln!(out, "time: {t}")?;
        writeln!(out, "hausdorff: {h:.6e}")?;
    }
    if let Some(path) = &args.out {
        let mut text = String::from("time,hausdorff\n");
        for (t, h) in &rows {
            text.push_str(&format!("{t:?},{h:?}\n"));
        }
        std::fs::write(path, text).map_err(|e| Failure {
            code: 1,
            message: format!("{}: {e}", path.display()),
        })?;
    }
    Ok(0)
}

fn cmd_oracle(args: OracleArgs, out: &mut dyn Write) -> CliResult {
    let n = args.cells;
    let file = match args.name {
        OracleName::Steiner => {
            let endpoints = match &args.endpoints {
                Some(s) => parse_points(s).map_err(Failure::usage)?,
                None => oracles::third_roots_of_unity(),
            };
            let t = oracles::steiner_triod(&endpoints, n)?;
            writeln!(out, "junction: {}", t.junction().iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" "))?;
            NetworkFile::from_triod(&t).with_metadata("name", json!("steiner"))
        }
        OracleName::Circle => {
            let c = oracles::ShrinkingCircle::new(args.radius, n)?;
            writeln!(out, "collapse_time: {:?}", c.collapse_time())?;
            NetworkFile::from_curve(&c.initial()?)
                .with_metadata("name", json!("circle"))
                .with_metadata("radius", json!(args.radius))
                .with_metadata("collapse_time", json!(c.collapse_time()))
        }
        OracleName::Bumped => NetworkFile::from_triod(&oracles::bumped_triod(n)?).with_metadata("name", json!("bumped")),
        OracleName::Infeasible => {
            NetworkFile::from_triod(&oracles::infeasible_triod(n)?).with_metadata("name", json!("infeasible"))
        }
        OracleName::ParallelTangents => NetworkFile::from_triod(&oracles::parallel_tangent_triod(n)?)
            .with_metadata("name", json!("parallel_tangents")),
    };
    io::save_network(&file, &args.out)?;
    writeln!(out, "wrote {}", args.out.display())?;
    Ok(0)
}
