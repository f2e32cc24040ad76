//! `lieopt` command-line tool.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure.

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lieopt::bench::{run_bench, BenchConfig, CSV_HEADER};
use lieopt::demo::{run_invdemo, DemoConfig, DemoInit};
use lieopt::imu::{integrate_step, predict, ImuNoise, NavState, PreintState};
use lieopt::lie::Precision;
use lieopt::optim::{Kernel, LinearSolver, StopReason, Strategy, Termination};
use lieopt::pose_graph::{circle_graph, optimize_pgo, parse_g2o, write_g2o, CircleSpec, PgoConfig};
use nalgebra::Vector3;

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<lieopt::Error> for CliError {
    fn from(e: lieopt::Error) -> Self {
        use lieopt::Error as E;
        match e {
            E::Solver(_) | E::NoConvergence { .. } | E::Corrector(_) | E::JacobianMismatch { .. } => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn input_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "lieopt", version, about = "Lie-group optimisation tools")]
struct Cli {
    /// Worker threads for batch-parallel sections (1 = reproducible mode).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimise an SE3 pose graph stored in g2o format.
    Pgo(PgoArgs),
    /// Integrate an IMU CSV into a trajectory with covariance trace.
    Imu(ImuArgs),
    /// Time the f1/f2/f3 operators and their batched Jacobians.
    Bench(BenchArgs),
    /// Estimate batched SE3 inverses with Levenberg-Marquardt.
    Invdemo(DemoArgs),
    /// Write a synthetic noisy circle pose graph in g2o format.
    GenCircle(CircleArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KernelArg {
    Trivial,
    Huber,
    Cauchy,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    Constant,
    Adaptive,
    TrustRegion,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SolverArg {
    /// Cholesky up to 1800 unknowns, PCG above.
    Auto,
    Cholesky,
    Pcg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be non-negative, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn vector3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got '{s}'"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|e| format!("'{p}': {e}"))?;
    }
    Ok(out)
}

#[derive(Args, Debug)]
struct PgoArgs {
    /// Input g2o file.
    #[arg(short, long)]
    input: PathBuf,
    /// Optimised g2o output (omit to skip).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Statistics JSON output (default: stdout).
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "trivial")]
    kernel: KernelArg,
    /// Robust kernel width.
    #[arg(long, default_value = "1.0", value_parser = positive)]
    kernel_delta: f64,
    #[arg(long, value_enum, default_value = "trust-region")]
    strategy: StrategyArg,
    /// Initial damping factor.
    #[arg(long, default_value = "1e-3", value_parser = positive)]
    damping: f64,
    #[arg(long, value_enum, default_value = "auto")]
    solver: SolverArg,
    /// PCG relative residual tolerance.
    #[arg(long, default_value = "1e-10", value_parser = positive)]
    tol: f64,
    /// PCG iteration limit (default: 10 x unknowns).
    #[arg(long)]
    max_iter: Option<usize>,
    /// Maximum LM iterations.
    #[arg(long, default_value = "100")]
    steps: usize,
    /// Consecutive flat iterations before stopping.
    #[arg(long, default_value = "3")]
    patience: usize,
    /// Minimum chi2 decrease that counts as progress.
    #[arg(long, default_value = "1e-6", value_parser = non_negative)]
    decreasing: f64,
    /// Fail unless the final chi2 is within 1% of this value.
    #[arg(long, value_parser = positive)]
    reference_chi2: Option<f64>,
}

#[derive(Args, Debug)]
struct ImuArgs {
    /// CSV with header t,wx,wy,wz,ax,ay,az.
    #[arg(short, long)]
    input: PathBuf,
    /// Trajectory CSV output (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Gyroscope noise density, rad/s/sqrt(Hz).
    #[arg(long, default_value = "0", value_parser = non_negative)]
    gyro_noise: f64,
    /// Accelerometer noise density, m/s^2/sqrt(Hz).
    #[arg(long, default_value = "0", value_parser = non_negative)]
    accel_noise: f64,
    /// Gravity vector "gx,gy,gz" in m/s^2.
    #[arg(long, default_value = "0,0,-9.81", value_parser = vector3, allow_hyphen_values = true)]
    gravity: [f64; 3],
    #[arg(long, default_value = "0,0,0", value_parser = vector3, allow_hyphen_values = true)]
    gyro_bias: [f64; 3],
    #[arg(long, default_value = "0,0,0", value_parser = vector3, allow_hyphen_values = true)]
    accel_bias: [f64; 3],
    /// Initial position.
    #[arg(long, default_value = "0,0,0", value_parser = vector3, allow_hyphen_values = true)]
    init_p: [f64; 3],
    /// Initial velocity.
    #[arg(long, default_value = "0,0,0", value_parser = vector3, allow_hyphen_values = true)]
    init_v: [f64; 3],
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Comma-separated batch sizes.
    #[arg(long, value_delimiter = ',', default_value = "1,100,10000")]
    batches: Vec<usize>,
    #[arg(long, value_enum, default_value = "f64")]
    precision: PrecisionArg,
    /// CSV output (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "3")]
    warmup: usize,
    #[arg(long, default_value = "7")]
    repeats: usize,
    /// Minimum items processed per timed run.
    #[arg(long, default_value = "20000")]
    min_items: usize,
    #[arg(long, default_value = "0")]
    seed: u64,
}

#[derive(Args, Debug)]
struct DemoArgs {
    /// Number of transforms to invert.
    #[arg(short, long, default_value = "10")]
    batch: usize,
    #[arg(long, default_value = "0")]
    seed: u64,
    /// Start from the exact inverses instead of random poses.
    #[arg(long)]
    exact_init: bool,
    #[arg(long, default_value = "1e-4", value_parser = positive)]
    damping: f64,
    #[arg(long, default_value = "10")]
    steps: usize,
    #[arg(long, default_value = "3")]
    patience: usize,
    #[arg(long, default_value = "1e-3", value_parser = non_negative)]
    decreasing: f64,
}

#[derive(Args, Debug)]
struct CircleArgs {
    /// Noisy graph output (g2o).
    #[arg(short, long)]
    output: PathBuf,
    /// Ground-truth graph output (g2o).
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "100")]
    nodes: usize,
    #[arg(long, default_value = "10", value_parser = positive)]
    radius: f64,
    /// Translation noise standard deviation, m.
    #[arg(long, default_value = "0.05", value_parser = positive)]
    sigma_t: f64,
    /// Rotation noise standard deviation, rad.
    #[arg(long, default_value = "0.02", value_parser = positive)]
    sigma_r: f64,
    #[arg(long, default_value = "0")]
    seed: u64,
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| input_err(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_file(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| input_err(path, e))
}

fn cmd_pgo(args: &PgoArgs) -> CliResult {
    let file = File::open(&args.input).map_err(|e| input_err(&args.input, e))?;
    let graph = parse_g2o(BufReader::new(file)).map_err(|e| input_err(&args.input, e))?;
    let n = graph.nodes.len().saturating_sub(1) * 6;
    let solver = match args.solver {
        SolverArg::Auto => None,
        SolverArg::Cholesky => Some(LinearSolver::Cholesky),
        SolverArg::Pcg => Some(LinearSolver::Pcg {
            tol: args.tol,
            max_iter: args.max_iter.unwrap_or(10 * n.max(1)),
        }),
    };
    let config = PgoConfig {
        kernel: match args.kernel {
            KernelArg::Trivial => Kernel::Trivial,
            KernelArg::Huber => Kernel::Huber(args.kernel_delta),
            KernelArg::Cauchy => Kernel::Cauchy(args.kernel_delta),
        },
        strategy: match args.strategy {
            StrategyArg::Constant => Strategy::constant(args.damping),
            StrategyArg::Adaptive => Strategy::adaptive(args.damping),
            StrategyArg::TrustRegion => Strategy::trust_region(args.damping),
        },
        solver,
        steps: args.steps,
        patience: args.patience,
        decreasing: args.decreasing,
        numeric_jacobian: false,
    };
    let (out, stats) = optimize_pgo(&graph, &config)?;
    if let Some(path) = &args.output {
        write_file(path, &write_g2o(&out))?;
    }
    let json = stats.to_json();
    match &args.stats {
        Some(path) => write_file(path, &(json + "\n"))?,
        None => println!("{json}"),
    }
    log::info!(
        "chi2 {:.6e} -> {:.6e} in {} iterations ({:?})",
        stats.initial_chi2,
        stats.final_chi2,
        stats.iterations,
        stats.termination
    );
    match &stats.termination {
        Termination::Error(msg) => return Err(CliError::Numerical(format!("optimisation failed: {msg}"))),
        Termination::Schedule(StopReason::Diverged) => {
            return Err(CliError::Numerical("optimisation diverged".into()))
        }
        _ => {}
    }
    if let Some(reference) = args.reference_chi2 {
        let rel = (stats.final_chi2 - reference).abs() / reference;
        if !(rel < 0.01) {
            return Err(CliError::Numerical(format!(
                "final chi2 {:.6e} differs from reference {reference:.6e} by {:.2}%",
                stats.final_chi2,
                rel * 100.0
            )));
        }
    }
    Ok(())
}

fn cmd_imu(args: &ImuArgs) -> CliResult {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&args.input)
        .map_err(|e| input_err(&args.input, e))?;
    let header = reader.headers().map_err(|e| input_err(&args.input, e))?.clone();
    let expected = ["t", "wx", "wy", "wz", "ax", "ay", "az"];
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(input_err(
            &args.input,
            format!("header must be {}", expected.join(",")),
        ));
    }
    let noise = ImuNoise::new(args.gyro_noise, args.accel_noise)?;
    let gravity = Vector3::from(args.gravity);
    let x0 = NavState {
        p: Vector3::from(args.init_p),
        v: Vector3::from(args.init_v),
        ..NavState::default()
    };
    let mut state = PreintState::new(Vector3::from(args.gyro_bias), Vector3::from(args.accel_bias));
    let mut out = csv::Writer::from_writer(open_output(args.output.as_deref())?);
    let out_err = |e: csv::Error| CliError::Input(format!("writing trajectory: {e}"));
    out.write_record(["t", "px", "py", "pz", "vx", "vy", "vz", "qx", "qy", "qz", "qw", "trace_cov"])
        .map_err(out_err)?;
    let mut previous: Option<(f64, Vector3<f64>, Vector3<f64>)> = None;
    for (index, record) in reader.records().enumerate() {
        // data rows start on line 2
        let row = index + 2;
        let record = record.map_err(|e| input_err(&args.input, format!("row {row}: {e}")))?;
        let mut v = [0.0; 7];
        if record.len() != 7 {
            return Err(input_err(&args.input, format!("row {row}: expected 7 fields, found {}", record.len())));
        }
        for (slot, field) in v.iter_mut().zip(record.iter()) {
            *slot = field
                .parse()
                .map_err(|_| input_err(&args.input, format!("row {row}: invalid number '{field}'")))?;
        }
        let t = v[0];
        if let Some((t_prev, w, a)) = previous {
            if !(t > t_prev) {
                return Err(input_err(
                    &args.input,
                    format!("row {row}: timestamp {t} is not after {t_prev}"),
                ));
            }
            state = integrate_step(&state, &w, &a, t - t_prev, &noise)
                .map_err(|e| input_err(&args.input, format!("row {row}: {e}")))?;
        }
        let x = predict(&x0, &state, &gravity);
        let fields = [
            t,
            x.p.x,
            x.p.y,
            x.p.z,
            x.v.x,
            x.v.y,
            x.v.z,
            x.q[0],
            x.q[1],
            x.q[2],
            x.q[3],
            state.cov.trace(),
        ];
        out.write_record(fields.iter().map(|f| f.to_string())).map_err(out_err)?;
        previous = Some((t, Vector3::new(v[1], v[2], v[3]), Vector3::new(v[4], v[5], v[6])));
    }
    out.flush().map_err(|e| CliError::Input(format!("writing trajectory: {e}")))?;
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> CliResult {
    let cfg = BenchConfig {
        batches: args.batches.clone(),
        precision: match args.precision {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        },
        warmup: args.warmup,
        repeats: args.repeats,
        min_items: args.min_items,
        seed: args.seed,
        ..BenchConfig::default()
    };
    let rows = run_bench(&cfg)?;
    let mut out = csv::Writer::from_writer(open_output(args.output.as_deref())?);
    let out_err = |e: csv::Error| CliError::Input(format!("writing benchmark: {e}"));
    out.write_record(CSV_HEADER).map_err(out_err)?;
    for row in &rows {
        out.write_record(row.record()).map_err(out_err)?;
    }
    out.flush().map_err(|e| CliError::Input(format!("writing benchmark: {e}")))?;
    if let Some(bad) = rows.iter().find(|r| !r.self_check) {
        return Err(CliError::Numerical(format!(
            "self-check failed for {} {} at batch {}",
            bad.op, bad.mode, bad.batch
        )));
    }
    Ok(())
}

fn cmd_invdemo(args: &DemoArgs) -> CliResult {
    let cfg = DemoConfig {
        batch: args.batch,
        seed: args.seed,
        init: if args.exact_init { DemoInit::Exact } else { DemoInit::Random },
        damping: args.damping,
        steps: args.steps,
        patience: args.patience,
        decreasing: args.decreasing,
    };
    let report = run_invdemo(&cfg)?;
    println!("{:>4}  {:>14}  {:>10}  {:>8}", "iter", "loss", "damping", "accepted");
    println!("{:>4}  {:>14.6e}  {:>10}  {:>8}", 0, report.initial_error, "-", "-");
    for r in &report.history {
        println!("{:>4}  {:>14.6e}  {:>10.2e}  {:>8}", r.iteration, r.loss, r.lambda, r.accepted);
    }
    println!("final error: {:.6e}", report.final_error);
    println!("stopped: {:?}, {:.3} s", report.termination, report.wall_time_s);
    if let Termination::Error(msg) = report.termination {
        return Err(CliError::Numerical(msg));
    }
    Ok(())
}

fn cmd_gen_circle(args: &CircleArgs) -> CliResult {
    let spec = CircleSpec {
        nodes: args.nodes,
        radius: args.radius,
        sigma_t: args.sigma_t,
        sigma_r: args.sigma_r,
        seed: args.seed,
    };
    let (noisy, truth) = circle_graph(&spec)?;
    write_file(&args.output, &write_g2o(&noisy))?;
    if let Some(path) = &args.truth {
        write_file(path, &write_g2o(&truth))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Pgo(a) => cmd_pgo(a),
        Command::Imu(a) => cmd_imu(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Invdemo(a) => cmd_invdemo(a),
        Command::GenCircle(a) => cmd_gen_circle(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_INPUT);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
