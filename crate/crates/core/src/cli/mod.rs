//! Command-line driver: `solve`, `partition`, `check` and `bounds`.
//!
//! Exit codes: 0 when the run converged, 2 when it hit an iteration limit
//! (or stalled), 1 on any error.

mod config;
mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use config::{Algorithm, PartitionSpec, RunConfig, VanillaConfig};
pub use output::{
    BoundsReport, CheckReport, SavedState, Summary, Termination, FORMAT_VERSION, SUMMARY_SCHEMA,
};

use crate::baselines::{solve_centralized, vanilla_admm};
use crate::diagnostics::{
    complexity_bounds, feasibility_stationarity, matrix_norm_checks, stationarity_residuals, BoundInputs, Residual,
    UpperBound,
};
use crate::error::{Error, Result};
use crate::netmodel::{parse_case, PowerNetwork};
use crate::partition::{partition_bfs_kl, partition_from_file, Partition};
use crate::reform::{build_distributed, DistributedProblem};
use crate::twolevel::{norm2, norm_inf, two_level_solve, Heuristic, Rule, Status};

#[derive(Debug, Parser)]
#[command(name = "tladmm", version, about = "Distributed AC optimal power flow with a two-level ADMM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a case and write trace.csv, summary.json, partition.json and state.json.
    Solve(SolveArgs),
    /// Partition a case and print the assignment.
    Partition(PartitionArgs),
    /// Run diagnostics on a saved state.json.
    Check(CheckArgs),
    /// Evaluate the iteration-complexity constants for a partitioned case.
    Bounds(BoundsArgs),
}

#[derive(Debug, Args)]
struct CaseArgs {
    /// MATPOWER `.m` or JSON case file.
    #[arg(long)]
    case: Option<PathBuf>,
    /// Number of regions for the built-in partitioner.
    #[arg(long)]
    regions: Option<usize>,
    /// Assignment file (`bus_id region` lines or JSON).
    #[arg(long)]
    assignment: Option<PathBuf>,
    /// Seed of the built-in partitioner.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// TOML run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    case: CaseArgs,
    /// Algorithm to run.
    #[arg(long, value_enum)]
    algo: Option<Algorithm>,
    /// Outer update: `rule1` or `rule2`.
    #[arg(long, value_parser = parse_rule)]
    rule: Option<Rule>,
    /// Penalty heuristic: `none`, `tl1`, `tl2` or `tl3`.
    #[arg(long, value_parser = parse_heuristic)]
    heuristic: Option<Heuristic>,
    /// Initial outer penalty β⁰.
    #[arg(long)]
    beta0: Option<f64>,
    /// Outer penalty growth factor.
    #[arg(long)]
    c: Option<f64>,
    /// Inner penalty growth factor of the heuristics.
    #[arg(long)]
    gamma: Option<f64>,
    /// Required decrease ratio before a penalty is kept.
    #[arg(long)]
    theta: Option<f64>,
    /// Outer stop: `‖Ax + Bx̄‖₂ ≤ √d·ε`.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Vanilla ADMM penalty.
    #[arg(long)]
    rho: Option<f64>,
    /// Vanilla ADMM iterations.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Worker threads; 0 runs sequentially.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also solve centrally and report the relative gap.
    #[arg(long)]
    gap: bool,
}

#[derive(Debug, Args)]
struct PartitionArgs {
    /// MATPOWER `.m` or JSON case file.
    #[arg(long)]
    case: PathBuf,
    /// Number of regions.
    #[arg(long, default_value_t = 2)]
    regions: usize,
    /// Seed of the partitioner.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the assignment here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write the partition report (JSON) here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// state.json written by `solve`.
    #[arg(long)]
    state: PathBuf,
    /// Case file; defaults to the one recorded in the state.
    #[arg(long)]
    case: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Initial outer penalty β⁰.
    #[arg(long, default_value_t = 1000.0)]
    beta0: f64,
    /// Outer penalty growth factor.
    #[arg(long, default_value_t = 6.0)]
    c: f64,
    /// Target on `‖Ax + Bx̄‖₂`; defaults to `√d·2e-4`, the solver's stop test.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Bound on the outer multipliers.
    #[arg(long, default_value_t = 1e12)]
    lambda_bound: f64,
    /// `flat`, `box`, or a number.
    #[arg(long, default_value = "flat", value_parser = parse_upper)]
    upper: UpperBound,
    /// Bound on `‖λᵏ + βᵏzᵏ‖`; enables K2.
    #[arg(long)]
    big_lambda: Option<f64>,
}

fn parse_rule(s: &str) -> std::result::Result<Rule, String> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase())).map_err(|_| format!("unknown rule {s:?}"))
}

fn parse_heuristic(s: &str) -> std::result::Result<Heuristic, String> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase())).map_err(|_| format!("unknown heuristic {s:?}"))
}

fn parse_upper(s: &str) -> std::result::Result<UpperBound, String> {
    match s {
        "flat" => Ok(UpperBound::FlatStart),
        "box" => Ok(UpperBound::BoxMax),
        v => v.parse().map(UpperBound::Value).map_err(|_| format!("expected flat, box or a number, got {v:?}")),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Partition(a) => partition(a),
        Command::Check(a) => check(a),
        Command::Bounds(a) => bounds(a),
    };
    match outcome {
        Ok(t) => t.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn load_case(path: &Path) -> Result<PowerNetwork> {
    parse_case(&read(path)?)
}

pub fn load_partition(net: &PowerNetwork, spec: &PartitionSpec, seed: u64) -> Result<Partition> {
    match &spec.assignment {
        Some(p) => partition_from_file(net, &read(p)?),
        None if spec.regions == 1 => Ok(Partition::single(net)),
        None => partition_bfs_kl(net, spec.regions, seed),
    }
}

fn resolve(args: &SolveArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ca = &args.case;
    if let Some(v) = &ca.case {
        cfg.case = Some(v.clone());
    }
    if let Some(v) = ca.regions {
        cfg.partition = PartitionSpec {
            regions: v,
            assignment: None,
        };
    }
    if let Some(v) = &ca.assignment {
        cfg.partition.assignment = Some(v.clone());
    }
    if let Some(v) = ca.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.algo {
        cfg.algorithm = v;
    }
    let tl = &mut cfg.two_level;
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(tl.rule, args.rule);
    set!(tl.heuristic, args.heuristic);
    set!(tl.beta0, args.beta0);
    set!(tl.c, args.c);
    set!(tl.gamma, args.gamma);
    set!(tl.theta, args.theta);
    set!(tl.epsilon, args.epsilon);
    set!(cfg.vanilla.epsilon, args.epsilon);
    set!(cfg.vanilla.rho, args.rho);
    set!(cfg.vanilla.max_iter, args.max_iter);
    set!(cfg.threads, args.threads);
    set!(cfg.output, args.out.clone());
    cfg.gap |= args.gap;
    cfg.two_level.threads = cfg.threads;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs `solve` for a resolved configuration and writes its artifacts.
pub fn run_solve(cfg: &RunConfig) -> Result<Summary> {
    cfg.validate()?;
    let case_path = cfg.case.as_ref().expect("validated");
    let net = load_case(case_path)?;
    let part = load_partition(&net, &cfg.partition, cfg.seed)?;
    let problem = build_distributed(&net, &part)?;
    let d = problem.n_rows();
    let out = &cfg.output;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write(&out.join("partition.json"), &serde_json::to_string_pretty(&part.report(&net))?)?;

    let started = Instant::now();
    let tol = cfg.two_level.nlp;
    let mut summary = Summary::new(cfg, case_path, &problem);
    match cfg.algorithm {
        Algorithm::TwoLevel => {
            let res = two_level_solve(&problem, &cfg.two_level)?;
            summary.termination = match res.status {
                Status::Converged => Termination::Converged,
                Status::MaxOuter => Termination::MaxIterations,
                Status::Stalled => Termination::Stalled,
            };
            summary.objective = res.objective;
            summary.residual_norm = res.consensus_norm;
            summary.residual_inf = res.consensus_inf;
            summary.tolerance = (d as f64).sqrt() * cfg.two_level.epsilon;
            summary.outer_iterations = res.outer_iterations;
            summary.inner_iterations = res.inner_iterations;
            summary.stationarity = Some(stationarity_residuals(
                &res.inner,
                &problem,
                &res.inner.beta,
                &res.inner.lambda,
                Residual::Relaxed,
            )?);
            write(&out.join("trace.csv"), &res.trace.to_csv())?;
            save_state(out, case_path, &part, &res.inner)?;
        }
        Algorithm::Vanilla => {
            let v = &cfg.vanilla;
            let run = vanilla_admm(&problem, v.rho, v.max_iter, tol)?;
            let r = problem.coupling().consensus_residual(&run.state.x, &run.state.xbar);
            summary.tolerance = (d as f64).sqrt() * v.epsilon;
            summary.objective = problem.cost(&run.state.x);
            summary.residual_norm = norm2(&r);
            summary.residual_inf = norm_inf(&r);
            summary.termination = if summary.residual_norm <= summary.tolerance {
                Termination::Converged
            } else {
                Termination::MaxIterations
            };
            summary.outer_iterations = 1;
            summary.inner_iterations = run.trace.rows.len();
            summary.stationarity = Some(stationarity_residuals(
                &run.state,
                &problem,
                &vec![0.0; d],
                &vec![0.0; d],
                Residual::Consensus,
            )?);
            write(&out.join("trace.csv"), &run.trace.to_csv())?;
            save_state(out, case_path, &part, &run.state)?;
        }
        Algorithm::Centralized => {
            let sol = solve_centralized(&net, &tol)?;
            summary.objective = sol.objective;
            summary.termination = if sol.converged {
                Termination::Converged
            } else {
                Termination::MaxIterations
            };
            summary.inner_iterations = sol.iterations;
            summary.outer_iterations = 1;
            summary.centralized_objective = Some(sol.objective);
            summary.gap = Some(0.0);
        }
    }
    if cfg.gap && cfg.algorithm != Algorithm::Centralized {
        let central = solve_centralized(&net, &tol)?;
        summary.centralized_objective = Some(central.objective);
        summary.gap = Some((summary.objective - central.objective) / central.objective.abs().max(1e-12));
    }
    summary.wall_time_s = started.elapsed().as_secs_f64();
    write(&out.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    log::info!(
        "{:?}: objective {:.6}, residual {:.3e}, {:?}",
        cfg.algorithm,
        summary.objective,
        summary.residual_norm,
        summary.termination
    );
    Ok(summary)
}

fn save_state(out: &Path, case: &Path, part: &Partition, inner: &crate::twolevel::InnerState) -> Result<()> {
    let saved = SavedState {
        format_version: FORMAT_VERSION,
        case: case.to_path_buf(),
        assignment: part.assignment().to_vec(),
        inner: inner.clone(),
    };
    write(&out.join("state.json"), &serde_json::to_string(&saved)?)
}

fn solve(args: SolveArgs) -> Result<Termination> {
    let cfg = resolve(&args)?;
    let summary = run_solve(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(summary.termination)
}

fn partition(args: PartitionArgs) -> Result<Termination> {
    let net = load_case(&args.case)?;
    let spec = PartitionSpec {
        regions: args.regions,
        assignment: None,
    };
    let part = load_partition(&net, &spec, args.seed)?;
    let text = part.to_assignment_text(&net);
    match &args.output {
        Some(p) => write(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(p) = &args.report {
        write(p, &serde_json::to_string_pretty(&part.report(&net))?)?;
    }
    Ok(Termination::Converged)
}

/// Diagnostics for a saved state.
pub fn run_check(saved: &SavedState, case: Option<&Path>) -> Result<CheckReport> {
    let net = load_case(case.unwrap_or(&saved.case))?;
    let part = Partition::from_assignment(&net, saved.assignment.clone())?;
    let problem = build_distributed(&net, &part)?;
    let s = &saved.inner;
    Ok(CheckReport {
        format_version: FORMAT_VERSION,
        relaxed: stationarity_residuals(s, &problem, &s.beta, &s.lambda, Residual::Relaxed)?,
        consensus: stationarity_residuals(s, &problem, &s.beta, &s.lambda, Residual::Consensus)?,
        feasibility_stationarity: feasibility_stationarity(&problem, &s.x, &s.xbar),
        objective: problem.cost(&s.x),
        matrix_norms: matrix_norm_checks(problem.coupling()),
    })
}

fn check(args: CheckArgs) -> Result<Termination> {
    let saved: SavedState = serde_json::from_str(&read(&args.state)?)?;
    if saved.format_version != FORMAT_VERSION {
        return Err(Error::Config(format!("unsupported state format_version {}", saved.format_version)));
    }
    let report = run_check(&saved, args.case.as_deref())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(Termination::Converged)
}

fn bounds_problem(ca: &CaseArgs) -> Result<DistributedProblem> {
    let path = ca.case.as_ref().ok_or_else(|| Error::Config("no case file given".into()))?;
    let net = load_case(path)?;
    let spec = PartitionSpec {
        regions: ca.regions.unwrap_or(2),
        assignment: ca.assignment.clone(),
    };
    let part = load_partition(&net, &spec, ca.seed.unwrap_or(0))?;
    build_distributed(&net, &part)
}

fn bounds(args: BoundsArgs) -> Result<Termination> {
    let problem = bounds_problem(&args.case)?;
    let d = problem.n_rows();
    let inputs = BoundInputs {
        beta0: args.beta0,
        c: args.c,
        epsilon: args.epsilon.unwrap_or((d as f64).sqrt() * 2e-4),
        lambda_bound: args.lambda_bound,
        upper: args.upper,
        big_lambda: args.big_lambda,
    };
    let report = BoundsReport {
        format_version: FORMAT_VERSION,
        inputs,
        constants: complexity_bounds(&problem, &inputs)?,
        matrix_norms: matrix_norm_checks(problem.coupling()),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(Termination::Converged)
}
