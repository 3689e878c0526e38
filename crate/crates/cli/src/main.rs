use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use robust_contracts::format::{instance_to_json, read_document, Document, FormatError};
use robust_contracts::generators::{gen_tight_lb, gen_tight_ub, try_gen_random};
use robust_contracts::learning::{run_ucb1, BaselineMode, LearnConfig, LearnError};
use robust_contracts::oracle::{grid_opt_typed, GridSpec, OracleError};
use robust_contracts::{bounds, solve_robust, Instance, RobustError, RobustSolution};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "robust-contracts",
    version,
    about = "Optimal contracts against δ-best-responding agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance file; exits 1 if it has errors.
    Validate { path: PathBuf },
    /// Compute an optimal δ-robust contract.
    Solve {
        path: PathBuf,
        #[arg(long)]
        delta: f64,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Write the solution as JSON to this file.
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Robust optimum and closed-form bounds over a range of δ, as CSV.
    Bounds {
        path: PathBuf,
        /// `start:stop:step`, inclusive of `stop`.
        #[arg(long)]
        delta_grid: String,
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate an instance file.
    Gen(GenArgs),
    /// Grid search for the best robust value.
    Oracle {
        path: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Upper end of every payment coordinate.
        #[arg(long, default_value_t = 1.0)]
        upper: f64,
    },
    /// Run UCB1 over a contract lattice and write the per-round CSV.
    Learn {
        path: PathBuf,
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Lattice step (default T^(-1/(m+1))).
        #[arg(long)]
        epsilon: Option<f64>,
        /// Step of the benchmark grid.
        #[arg(long)]
        oracle_step: Option<f64>,
        #[arg(long, value_enum, default_value_t = Baseline::Both)]
        baseline: Baseline,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    family: Family,
    #[arg(long)]
    delta: Option<f64>,
    /// Size parameter of tight-lb, or number of actions of random.
    #[arg(long)]
    n: Option<usize>,
    /// Number of outcomes of random.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Do not force action 0 to be an opt-out in random instances.
    #[arg(long)]
    no_opt_out: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    TightLb,
    TightUb,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Robust,
    Nonrobust,
    Both,
}

impl From<Baseline> for BaselineMode {
    fn from(b: Baseline) -> Self {
        match b {
            Baseline::Robust => Self::Robust,
            Baseline::Nonrobust => Self::NonRobust,
            Baseline::Both => Self::Both,
        }
    }
}

/// Exit 1 for bad input, 2 for failures inside the solver.
enum Failure {
    Usage(String),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Internal(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::Internal(e.into())
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<RobustError> for Failure {
    fn from(e: RobustError) -> Self {
        match e {
            RobustError::Model(m) => Self::Usage(m.to_string()),
            other => Self::Internal(other.into()),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<LearnError> for Failure {
    fn from(e: LearnError) -> Self {
        Self::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn check_delta(delta: f64) -> Outcome {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "--delta must lie in (0, 1), got {delta}"
        )))
    }
}

fn plain(path: &Path) -> Result<Instance, Failure> {
    match read_document(path)? {
        Document::Single(inst, _) => Ok(inst),
        Document::Typed(..) => Err(Failure::Usage(format!(
            "{} is a typed instance; this command needs a single instance",
            path.display()
        ))),
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, Failure> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("cannot start worker threads")?)
}

/// Opens `path` for writing, or stdout.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_delta_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = || {
        Failure::Usage(format!(
            "--delta-grid expects start:stop:step, got {spec:?}"
        ))
    };
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0 && start <= stop) {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    let grid: Vec<f64> = (0..count).map(|i| start + i as f64 * step).collect();
    for &d in &grid {
        check_delta(d)?;
    }
    Ok(grid)
}

fn validate(path: &Path) -> Outcome {
    let doc = match read_document(path) {
        Ok(doc) => doc,
        Err(FormatError::Invalid(report)) => {
            for issue in &report.errors {
                eprintln!("error: {issue}");
            }
            for issue in &report.warnings {
                eprintln!("warning: {issue}");
            }
            return Err(Failure::Usage(format!("{} is invalid", path.display())));
        }
        Err(e) => return Err(e.into()),
    };
    for issue in &doc.report().warnings {
        println!("warning: {issue}");
    }
    match &doc {
        Document::Single(inst, _) => println!("ok: {} actions, {} outcomes", inst.n(), inst.m()),
        Document::Typed(t, _) => println!(
            "ok: {} types, {} actions, {} outcomes",
            t.types().len(),
            t.n(),
            t.m()
        ),
    }
    Ok(())
}

fn certificate(delta: f64, sol: &RobustSolution) -> serde_json::Value {
    json!({ "delta": delta, "solution": sol })
}

fn solve(path: &Path, delta: f64, threads: usize, emit: Option<&Path>) -> Outcome {
    check_delta(delta)?;
    let inst = plain(path)?;
    let sol = pool(threads)?.install(|| solve_robust(&inst, delta))?;
    println!("psi = {}", sol.psi);
    println!("contract = {}", sol.contract);
    println!("pair = ({}, {})", sol.a_star, sol.a_delta);
    println!("partition = {}", sol.partition_index);
    println!(
        "subproblems = {} ({} feasible)",
        sol.subproblems, sol.feasible_subproblems
    );
    if let Some(p) = emit {
        let mut out = sink(Some(p))?;
        serde_json::to_writer_pretty(&mut out, &certificate(delta, &sol))
            .context("cannot write solution")?;
        writeln!(out)?;
        out.flush()?;
    }
    Ok(())
}

fn sweep(path: &Path, grid: &str, threads: usize, output: Option<&Path>) -> Outcome {
    let deltas = parse_delta_grid(grid)?;
    let inst = plain(path)?;
    let pool = pool(threads)?;
    let mut out = sink(output)?;
    writeln!(out, "delta,opt_delta,lb,ub")?;
    for delta in deltas {
        let value = pool.install(|| solve_robust(&inst, delta))?.psi;
        let b = bounds(&inst, delta).context("non-robust optimum failed")?;
        writeln!(out, "{delta},{value},{},{}", b.lb, b.ub)?;
    }
    out.flush()?;
    Ok(())
}

fn generate(args: &GenArgs) -> Outcome {
    let need = |v: Option<f64>, flag: &str| {
        v.ok_or_else(|| Failure::Usage(format!("this family needs --{flag}")))
    };
    let need_n = |v: Option<usize>, flag: &str| {
        v.ok_or_else(|| Failure::Usage(format!("this family needs --{flag}")))
    };
    let inst = match args.family {
        Family::TightLb => gen_tight_lb(need(args.delta, "delta")?, need_n(args.n, "n")?),
        Family::TightUb => gen_tight_ub(need(args.delta, "delta")?),
        Family::Random => try_gen_random(
            need_n(args.n, "n")?,
            need_n(args.m, "m")?,
            args.seed,
            !args.no_opt_out,
        ),
    }
    .map_err(|e| Failure::Usage(e.to_string()))?;
    let mut out = sink(args.output.as_deref())?;
    writeln!(out, "{}", instance_to_json(&inst))?;
    out.flush()?;
    Ok(())
}

fn oracle(path: &Path, delta: f64, step: f64, upper: f64) -> Outcome {
    check_delta(delta)?;
    let typed = read_document(path)?.into_typed();
    let grid = GridSpec::new(step, upper)?;
    let best = grid_opt_typed(&typed, delta, &grid)?;
    println!("value = {}", best.value);
    println!("contract = {}", best.contract);
    println!("points = {}", best.points);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn learn(
    path: &Path,
    horizon: usize,
    delta: f64,
    seed: u64,
    epsilon: Option<f64>,
    oracle_step: Option<f64>,
    baseline: Baseline,
    output: &Path,
) -> Outcome {
    check_delta(delta)?;
    if horizon == 0 {
        return Err(Failure::Usage("--T must be positive".into()));
    }
    let typed = read_document(path)?.into_typed();
    let cfg = LearnConfig {
        horizon,
        delta,
        epsilon,
        seed,
        baseline: baseline.into(),
        oracle_step,
    };
    let run = run_ucb1(&typed, &cfg)?;
    let mut out = sink(Some(output))?;
    run.write_csv(&mut out)?;
    out.flush()?;
    println!("arms = {}", run.arms.len());
    if let Some(r) = run.final_regret_robust() {
        println!("regret_robust = {r}");
    }
    if let Some(r) = run.final_regret_nonrobust() {
        println!("regret_nonrobust = {r}");
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Validate { path } => validate(&path),
        Command::Solve {
            path,
            delta,
            threads,
            emit,
        } => solve(&path, delta, threads, emit.as_deref()),
        Command::Bounds {
            path,
            delta_grid,
            threads,
            output,
        } => sweep(&path, &delta_grid, threads, output.as_deref()),
        Command::Gen(args) => generate(&args),
        Command::Oracle {
            path,
            delta,
            step,
            upper,
        } => oracle(&path, delta, step, upper),
        Command::Learn {
            path,
            horizon,
            delta,
            seed,
            epsilon,
            oracle_step,
            baseline,
            output,
        } => learn(
            &path,
            horizon,
            delta,
            seed,
            epsilon,
            oracle_step,
            baseline,
            &output,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
    }
}
