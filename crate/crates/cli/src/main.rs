//! `locnet`: generate networks, run solvers and Monte Carlo experiments, and
//! certify optimality gaps.
//!
//! Exit codes: 0 success, 2 usage, 3 validation, 4 iteration budget
//! exhausted, 5 internal.

mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use locnet_core::io::{experiment_csv, experiment_summary_json, to_json, trace_csv};
use locnet_core::{
    derive_seed, eval_fhat, gap_certificate, gen_measurements, generate_geometric, generate_with_average_degree,
    run_experiment, solve, GeometricParams, InitRule, InnerInit, LipschitzBound, Positions, Problem, ProblemData,
    SolverKind, SolverOptions, StopRule,
};
use serde::de::DeserializeOwned;

use scenario::ScenarioFile;

const WORKERS_VAR: &str = "LOCNET_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] locnet_core::Error),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(locnet_core::Error::NumericalDivergence { .. }) => 5,
            CliError::Core(_) => 3,
            CliError::Internal(_) => 5,
        }
    }
}

#[derive(Parser)]
#[command(name = "locnet", version, about = "Distributed sensor network localization by disk relaxation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random geometric network with noisy range measurements.
    Generate(GenerateArgs),
    /// Run one solver on a problem file.
    Solve(SolveArgs),
    /// Run a Monte Carlo experiment described by a scenario file.
    Experiment(ExperimentArgs),
    /// Bound the optimality gap of a relaxed solution.
    Gap(GapArgs),
    /// Print the JSON schema of scenario files.
    Schema,
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of sensors.
    #[arg(long)]
    n: usize,
    /// Embedding dimension.
    #[arg(long, default_value_t = 2)]
    p: usize,
    /// Connection radius.
    #[arg(long, conflicts_with = "target_avg_degree", required_unless_present = "target_avg_degree")]
    radius: Option<f64>,
    /// Pick the radius per draw to reach this average node degree.
    #[arg(long)]
    target_avg_degree: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Place one anchor at each corner of the unit square (cube).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    anchors_corners: bool,
    /// Additional anchors at uniformly random positions.
    #[arg(long, default_value_t = 0)]
    random_anchors: usize,
    /// Standard deviation of the range noise.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StopArg {
    GradientNorm,
    RelativeImprovement,
    FixedIterations,
}

#[derive(Clone, Copy, ValueEnum)]
enum InnerInitArg {
    WarmStart,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundArg {
    Degree,
    CommonNeighbor,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, value_parser = parse_solver)]
    solver: SolverKind,
    #[arg(long, value_enum, default_value_t = StopArg::GradientNorm)]
    stop_rule: StopArg,
    #[arg(long, default_value_t = 100_000)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-6)]
    gradient_tolerance: f64,
    #[arg(long, default_value_t = 1e-6)]
    relative_tolerance: f64,
    #[arg(long, default_value_t = 200)]
    inner_max_iterations: usize,
    #[arg(long, default_value_t = 1e-9)]
    inner_gradient_tolerance: f64,
    #[arg(long, value_enum, default_value_t = InnerInitArg::WarmStart)]
    inner_init: InnerInitArg,
    /// Weight of the proximal term in the exact asynchronous update.
    #[arg(long, default_value_t = 0.0)]
    proximal_weight: f64,
    #[arg(long, value_enum, default_value_t = BoundArg::Degree)]
    lipschitz_bound: BoundArg,
    /// Start from these positions instead of a random point in the unit box.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spread per-node gradients of the parallel solver over the worker pool.
    #[arg(long)]
    node_parallel: bool,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Estimate JSON; printed to stdout when absent.
    #[arg(long)]
    estimate_out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's CSV output.
    #[arg(long)]
    csv_out: Option<PathBuf>,
    /// Overrides the scenario's summary output.
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

#[derive(Args)]
struct GapArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    estimate: PathBuf,
    /// Relaxed optimum; defaults to the relaxed cost of the estimate.
    #[arg(long)]
    fhat: Option<f64>,
    /// Certificate JSON; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| "expected parallel, async-exact or async-inexact".into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_pool().and_then(|()| run(cli.command)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn configure_pool() -> Result<(), CliError> {
    let Ok(value) = std::env::var(WORKERS_VAR) else { return Ok(()) };
    let workers: usize = value
        .parse()
        .ok()
        .filter(|&w| w > 0)
        .ok_or_else(|| CliError::Usage(format!("{WORKERS_VAR} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(workers).build_global().map_err(|e| CliError::Internal(e.to_string()))
}

fn run(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Generate(args) => generate(args),
        Command::Solve(args) => solve_cmd(args),
        Command::Experiment(args) => experiment(args),
        Command::Gap(args) => gap(args),
        Command::Schema => {
            print!("{}", scenario::schema());
            Ok(0)
        }
    }
}

fn generate(args: GenerateArgs) -> Result<u8, CliError> {
    let topology = match (args.radius, args.target_avg_degree) {
        (Some(radius), None) => generate_geometric(
            &GeometricParams {
                n: args.n,
                p: args.p,
                radius,
                anchors_at_corners: args.anchors_corners,
                random_anchors: args.random_anchors,
            },
            args.seed,
        )?,
        (None, Some(target)) => {
            generate_with_average_degree(args.n, args.p, target, args.anchors_corners, args.random_anchors, args.seed)?
        }
        _ => return Err(CliError::Usage("give exactly one of --radius and --target-avg-degree".into())),
    };
    let m = gen_measurements(&topology, args.sigma, derive_seed(args.seed, &[1]))?;
    let problem = topology.with_measurements(&m.edge_ranges, &m.link_ranges)?;
    write(&args.out, &to_json(&problem.to_data(Some(&topology.truth))))?;
    println!("average degree: {}", topology.average_degree());
    Ok(0)
}

fn solve_cmd(args: SolveArgs) -> Result<u8, CliError> {
    let problem = load_problem(&args.problem)?;
    let init = match &args.init {
        Some(path) => InitRule::Given(read_json::<Positions>(path)?),
        None => InitRule::UniformUnitBox,
    };
    let opts = SolverOptions {
        max_iterations: args.max_iterations,
        stop_rule: match args.stop_rule {
            StopArg::GradientNorm => StopRule::GradientNorm,
            StopArg::RelativeImprovement => StopRule::RelativeImprovement,
            StopArg::FixedIterations => StopRule::FixedIterations,
        },
        gradient_tolerance: args.gradient_tolerance,
        relative_tolerance: args.relative_tolerance,
        inner_max_iterations: args.inner_max_iterations,
        inner_gradient_tolerance: args.inner_gradient_tolerance,
        init,
        rng_seed: args.seed,
        inner_init: match args.inner_init {
            InnerInitArg::WarmStart => InnerInit::WarmStart,
            InnerInitArg::Random => InnerInit::Random,
        },
        proximal_weight: args.proximal_weight,
        lipschitz_bound: match args.lipschitz_bound {
            BoundArg::Degree => LipschitzBound::Degree,
            BoundArg::CommonNeighbor => LipschitzBound::CommonNeighbor,
        },
        node_parallel: args.node_parallel,
        ..SolverOptions::default()
    };
    opts.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let started = Instant::now();
    let trace = solve(&problem, args.solver, &opts)?;
    let last = trace.final_record();
    eprintln!(
        "{}: {} after {} iterations, fhat {:e}, gradient norm {:e}, {:.3} s",
        args.solver,
        trace.termination,
        last.k,
        last.fhat,
        last.grad_norm,
        started.elapsed().as_secs_f64()
    );
    if let Some(path) = &args.trace_out {
        write(path, &trace_csv(&trace))?;
    }
    let estimate = to_json(&trace.estimate);
    match &args.estimate_out {
        Some(path) => write(path, &estimate)?,
        None => print!("{estimate}"),
    }
    Ok(if trace.termination.converged() { 0 } else { 4 })
}

fn experiment(args: ExperimentArgs) -> Result<u8, CliError> {
    let file = ScenarioFile::load(&args.scenario)?;
    let base = args.scenario.parent().unwrap_or(Path::new("."));
    let (config, outputs) = file.resolve(base)?;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let started = Instant::now();
    let result = run_experiment(&config)?;
    eprintln!(
        "{} trials completed, {} failed, {:.3} s",
        result.records.len(),
        result.failures.len(),
        started.elapsed().as_secs_f64()
    );
    for f in &result.failures {
        let solver = f.solver.map_or("measurements".to_string(), |s| s.to_string());
        eprintln!("trial {} at sigma {} ({solver}) failed: {}", f.trial, f.sigma, f.message);
    }
    for a in &result.aggregates {
        eprintln!("{} sigma {}: wall time {:.3} s", a.solver, a.sigma, a.wall_seconds);
    }

    if let Some(path) = args.csv_out.as_ref().or(outputs.csv.as_ref()) {
        write(path, &experiment_csv(&result))?;
    }
    let summary = experiment_summary_json(&result);
    match args.summary_out.as_ref().or(outputs.summary.as_ref()) {
        Some(path) => write(path, &summary)?,
        None => print!("{summary}"),
    }
    if result.records.is_empty() {
        return Err(CliError::Internal("every trial failed".into()));
    }
    Ok(0)
}

fn gap(args: GapArgs) -> Result<u8, CliError> {
    let problem = load_problem(&args.problem)?;
    let estimate: Positions = read_json(&args.estimate)?;
    let fhat = match args.fhat {
        Some(v) => v,
        None => eval_fhat(&problem, &estimate)?.value,
    };
    let certificate = to_json(&gap_certificate(&problem, &estimate, fhat)?);
    match &args.out {
        Some(path) => write(path, &certificate)?,
        None => print!("{certificate}"),
    }
    Ok(0)
}

fn load_problem(path: &Path) -> Result<Problem, CliError> {
    let data: ProblemData = read_json(path)?;
    Ok(Problem::from_data(&data)?)
}

pub(crate) fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}
