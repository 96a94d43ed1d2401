//! `cpid`: run change-point identification experiments and compute bounds.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on bad usage or input.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

const LONG_VERSION: &str = if cfg!(feature = "parallel") {
    concat!(env!("CARGO_PKG_VERSION"), "\nfeatures: parallel")
} else {
    concat!(env!("CARGO_PKG_VERSION"), "\nfeatures: sequential")
};

#[derive(Debug, Parser)]
#[command(name = "cpid", version, long_version = LONG_VERSION)]
#[command(about = "Fixed-confidence change-point identification in piecewise constant bandits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep and write the records CSV.
    Run(RunArgs),
    /// Print lower bounds, optimal proportions and horizons for an environment.
    Bounds(BoundsArgs),
    /// Aggregate a records CSV into per-delta summary rows.
    Summarize(SummarizeArgs),
    /// Produce figure series (mean stopping time against the lower bound).
    PlotData(PlotDataArgs),
    /// Check an environment file.
    ValidateEnv(ValidateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgoArg {
    Cpi,
    Mcpi,
    Oracle,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GuardArg {
    ClearLeader,
    AnyPair,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Any,
    Exact,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Json,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Environment JSON file; v1.json .. v4.json fall back to the bundled copies.
    env: PathBuf,
    #[arg(long, value_enum, default_value = "mcpi")]
    algo: AlgoArg,
    /// Number of change points to identify.
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Comma-separated confidence levels.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    delta_grid: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to available cores).
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long, default_value_t = cpid_core::policy::DEFAULT_STEP_CAP)]
    step_cap: u64,
    /// Enable the equal-gap guard on estimate updates (mcpi only).
    #[arg(long, value_enum)]
    guard: Option<GuardArg>,
    /// Correctness judgement written to the `correct` column.
    #[arg(long, value_enum, default_value = "any")]
    mode: ModeArg,
    /// Records CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the per-delta summary CSV here.
    #[arg(long)]
    summary_out: Option<PathBuf>,
    /// Write 0 in the wall_time_ms column so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
    /// Write the round-by-round trajectory of the first replication here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    env: PathBuf,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Noise scale; defaults to the environment's sigma.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
    /// Also write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    records: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use a percentile bootstrap with this many resamples for the interval.
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    bootstrap_seed: u64,
}

#[derive(Debug, Args)]
struct PlotDataArgs {
    records: PathBuf,
    /// Environment whose any-N lower bound is plotted.
    #[arg(long)]
    lower_bound_env: PathBuf,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    env: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Bounds(a) => commands::bounds(a),
        Command::Summarize(a) => commands::summarize(a),
        Command::PlotData(a) => commands::plot_data(a),
        Command::ValidateEnv(a) => commands::validate_env(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
