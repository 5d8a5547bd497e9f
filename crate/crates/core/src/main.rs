use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use delaygrad::bounds::BoundParams;
use delaygrad::dg::{read_trace_csv, StepsizeSchedule};
use delaygrad::graph::{
    generate_random_geometric, lazy_metropolis, GraphDocument, DEFAULT_MAX_ATTEMPTS,
};
use delaygrad::harness::{
    check_bounds, run_bound_check, run_convergence, run_delay_sweep, write_sweep_csv, Algo,
    BoundReport, HarnessError, RunConfig, DEFAULT_DT,
};

#[derive(Parser)]
#[command(
    name = "delaygrad",
    version,
    about = "Delayed distributed gradient simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a connected random geometric graph and its lazy Metropolis matrix.
    GenGraph(GenGraphArgs),
    /// Run one configuration and write its trace CSV.
    Run(IoArgs),
    /// Iterations to tolerance for every (algo, tau) cell.
    Sweep(IoArgs),
    /// Check a continuous-time trace against the consensus and rate bounds.
    BoundCheck(BoundCheckArgs),
}

#[derive(Args)]
struct IoArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenGraphArgs {
    /// JSON with keys n, r, seed and optionally max_attempts.
    #[arg(long, conflicts_with_all = ["n", "r", "seed"])]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    n: Option<usize>,
    #[arg(long, required_unless_present = "config")]
    r: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundCheckArgs {
    /// Run configuration to simulate and check.
    #[arg(long, required_unless_present_all = ["trace", "params"], conflicts_with_all = ["trace", "params"])]
    config: Option<PathBuf>,
    /// Existing trace CSV, checked against `--params`.
    #[arg(long, requires = "params")]
    trace: Option<PathBuf>,
    /// Bound parameters JSON.
    #[arg(long, requires = "trace")]
    params: Option<PathBuf>,
    /// Quadrature step for the consensus bound when checking a stored trace.
    #[arg(long, default_value_t = DEFAULT_DT)]
    quad_step: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct GraphConfig {
    n: usize,
    r: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    max_attempts: Option<usize>,
}

#[derive(Deserialize)]
struct SweepConfig {
    #[serde(flatten)]
    run: RunConfig,
    #[serde(default)]
    taus: Option<Vec<f64>>,
    #[serde(default)]
    algos: Option<Vec<Algo>>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(io::BufReader::new(file))?)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, HarnessError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn gen_graph(args: &GenGraphArgs) -> Result<(), HarnessError> {
    let cfg = match &args.config {
        Some(p) => read_json(p)?,
        None => GraphConfig {
            n: args.n.expect("required by clap"),
            r: args.r.expect("required by clap"),
            seed: args.seed,
            max_attempts: None,
        },
    };
    let topology = generate_random_geometric(
        cfg.n,
        cfg.r,
        cfg.seed,
        cfg.max_attempts.unwrap_or(DEFAULT_MAX_ATTEMPTS),
    )?;
    let mixing = lazy_metropolis(&topology);
    let doc = GraphDocument::new(&topology, &mixing)?;
    let mut out = output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn run(args: &IoArgs) -> Result<(), HarnessError> {
    let cfg: RunConfig = read_json(&args.config)?;
    let result = run_convergence(&cfg)?;
    let mut out = output(args.out.as_deref())?;
    result.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn sweep(args: &IoArgs) -> Result<(), HarnessError> {
    let cfg: SweepConfig = read_json(&args.config)?;
    let taus = cfg
        .taus
        .unwrap_or_else(|| (0..=10).map(f64::from).collect());
    let algos = cfg.algos.unwrap_or_else(|| vec![cfg.run.algo]);
    let rows = run_delay_sweep(&cfg.run, &taus, &algos)?;
    let mut out = output(args.out.as_deref())?;
    write_sweep_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn bound_check(args: &BoundCheckArgs) -> Result<BoundReport, HarnessError> {
    let report = match (&args.config, &args.trace, &args.params) {
        (Some(cfg), _, _) => run_bound_check(&read_json(cfg)?)?,
        (None, Some(trace), Some(params)) => {
            let params: BoundParams = read_json(params)?;
            let records = read_trace_csv(File::open(trace)?)?;
            check_bounds(
                &records,
                &params,
                StepsizeSchedule::PaperSqrt,
                args.quad_step,
            )?
        }
        _ => unreachable!("clap enforces --config or --trace with --params"),
    };
    let mut out = output(args.out.as_deref())?;
    report.write_csv(&mut out)?;
    out.flush()?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenGraph(a) => gen_graph(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::BoundCheck(a) => match bound_check(a) {
            Ok(report) => match report.first_violation() {
                None => Ok(()),
                Some(v) => {
                    eprintln!(
                        "bound violated: {:?} at t = {}: measured {} > bound {}",
                        v.check, v.t, v.measured, v.bound
                    );
                    return ExitCode::FAILURE;
                }
            },
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
