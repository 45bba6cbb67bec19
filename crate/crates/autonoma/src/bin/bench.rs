//! Fault-injection benchmark runner.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use autonoma::bench::{
    generate_workload, probe_filter, render_grid, report_metrics, run_blocking, verify_grid, BenchConfig, FaultModel,
    Format, GridSpec, Latency, Shape, ShapePolicy,
};
use autonoma::store::Store;
use autonoma_core::ExecutionPolicy;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "bench", version, about = "Synthetic fault-injection benchmark for the workflow engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one workload and print its metrics.
    Run(RunArgs),
    /// Compare measured completion with the analytic rate over a grid;
    /// exits nonzero on any deviation.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Workflows per run.
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Probability that a stalled attempt occurs.
    #[arg(long, default_value_t = 0.0)]
    stall: f64,
    /// Workflows in flight at once.
    #[arg(long, default_value_t = 32)]
    parallelism: usize,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Per-attempt failure probability.
    #[arg(long, default_value_t = 0.0)]
    fail: f64,
    /// Retries per step.
    #[arg(long, default_value_t = 2)]
    retries: u32,
    /// single, chain-K, diamond, random or mixed.
    #[arg(long, default_value = "single")]
    shape: ShapePolicy,
    /// Agent latency in logical ms: `100` or `50..200`.
    #[arg(long, default_value = "100")]
    latency: Latency,
    #[arg(long, default_value = "table")]
    format: Format,
    /// Persist every conversation under this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.3")]
    fail: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    retries: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "single,chain-3")]
    shapes: Vec<Shape>,
}

fn config(common: &Common, retries: u32, out: Option<&PathBuf>) -> Result<BenchConfig, Box<dyn std::error::Error>> {
    let policy = ExecutionPolicy { retry_limit: retries, ..ExecutionPolicy::default() };
    let store = out.map(Store::open).transpose()?;
    Ok(BenchConfig { policy, parallelism: common.parallelism, store })
}

fn run(args: RunArgs) -> Result<bool, Box<dyn std::error::Error>> {
    let fault = FaultModel::new(args.fail, args.common.stall, args.latency, args.common.seed)?;
    let workload = generate_workload(args.common.seed, args.common.n, args.shape);
    let cfg = config(&args.common, args.retries, args.out.as_ref())?;
    let started = Instant::now();
    let result = run_blocking(&workload, &fault, &cfg)?;
    let wall = started.elapsed();
    let probe = probe_filter(args.common.seed, 10_000);
    print!("{}", report_metrics(&result.metrics, Some(&probe), args.format));
    if args.format == Format::Table {
        println!(
            "\nworkload: {} x {} | f={} stall={} retries={} | analytic completion {:.4} | wall {:.2} s",
            args.common.n,
            args.shape,
            args.fail,
            args.common.stall,
            args.retries,
            result.expected_completion,
            wall.as_secs_f64()
        );
    } else {
        println!();
    }
    Ok(true)
}

fn verify(args: VerifyArgs) -> Result<bool, Box<dyn std::error::Error>> {
    let spec = GridSpec {
        n: args.common.n,
        seed: args.common.seed,
        fail_probs: args.fail,
        retry_limits: args.retries,
        shapes: args.shapes,
        stall_prob: args.common.stall,
    };
    let base = config(&args.common, 0, None)?;
    let cells = verify_grid(&spec, &base)?;
    print!("{}", render_grid(&cells));
    let failed = cells.iter().filter(|c| !c.passed()).count();
    println!("{} cells, {} deviations", cells.len(), failed);
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Verify(a) => verify(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("bench: {e}");
            ExitCode::from(2)
        }
    }
}
