//! `tasa`: explore, train controllers, optimize, slice landscapes, report.
//!
//! Every option can come from a flag, a `key = value` config file
//! (`--config`) or a built-in default, in that order. The effective values
//! go into each artifact's provenance manifest.

mod commands;
mod settings;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use settings::Settings;
use tasa_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "tasa", version, about = "Movement optimization in learned state-reaching action spaces")]
pub struct Cli {
    /// `key = value` file with option defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "TASA_WORKERS")]
    pub workers: Option<usize>,

    /// Directory that default output paths are placed under.
    #[arg(long, global = true, env = "TASA_ARTIFACT_ROOT", default_value = "artifacts")]
    pub root: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure per-dimension state ranges.
    Calibrate(CalibrateArgs),
    /// Collect random exploration transitions.
    Explore(ExploreArgs),
    /// Train the low-level controllers from an exploration buffer.
    TrainLlc(TrainLlcArgs),
    /// Run CMA-ES, MPC or PPO in a torque or learned action space.
    Optimize(OptimizeArgs),
    /// Evaluate a random 2D slice through an optimized solution.
    Landscape(LandscapeArgs),
    /// Normalized score table over optimizer runs.
    Report(ReportArgs),
    /// Recompute the hash chain of artifacts.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub env: Option<String>,
    /// Random-torque steps (at least 10000).
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    #[arg(long)]
    pub env: Option<String>,
    /// contact or naive.
    #[arg(long)]
    pub mode: Option<String>,
    /// Transitions to collect.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Episode length; 5 for contact, 100 for naive.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ranges file from `calibrate`; calibrated in-process if omitted.
    #[arg(long)]
    pub ranges: Option<PathBuf>,
    /// Also write the coverage scatter CSV here.
    #[arg(long)]
    pub scatter: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainLlcArgs {
    #[arg(long)]
    pub buffer: Option<PathBuf>,
    /// Refuse the buffer unless it was recorded on this env.
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub hmax: Option<usize>,
    /// Condition each controller on its final target only.
    #[arg(long)]
    pub single_target: bool,
    /// Sample only feasible (recorded) target trajectories.
    #[arg(long)]
    pub feasible_only: bool,
    /// desk (M=50, N=1500) or paper (M=500, N=15000).
    #[arg(long)]
    pub preset: Option<String>,
    /// PPO iterations per controller.
    #[arg(long)]
    pub m: Option<usize>,
    /// States sampled per iteration.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    /// PPO epochs over each iteration's samples.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub task: Option<String>,
    /// cma, mpc or ppo.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// baseline, llc_naive or llc_contact.
    #[arg(long)]
    pub mode: Option<String>,
    /// Target trajectory length in llc modes.
    #[arg(long = "H")]
    pub h: Option<usize>,
    /// Controller directory from `train-llc`.
    #[arg(long)]
    pub llc: Option<PathBuf>,
    /// Comma-separated seeds, one run each.
    #[arg(long)]
    pub seeds: Option<String>,
    /// CMA-ES iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// CMA-ES population.
    #[arg(long)]
    pub population: Option<usize>,
    /// MPC rollouts per step.
    #[arg(long)]
    pub rollouts: Option<usize>,
    /// Planning horizon in seconds (CMA-ES and MPC).
    #[arg(long)]
    pub horizon: Option<f64>,
    /// MPC episode length in actions.
    #[arg(long)]
    pub steps: Option<usize>,
    /// PPO simulation budget.
    #[arg(long)]
    pub total_steps: Option<usize>,
    /// Ranges for PPO observations in baseline mode.
    #[arg(long)]
    pub ranges: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LandscapeArgs {
    /// Solution file written by `optimize`.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    /// Controllers, when the solution uses a learned action space.
    #[arg(long)]
    pub llc: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub extent: Option<f64>,
    /// Episodes averaged per cell for policy solutions.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Basin threshold as a fraction of the center return.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories or run CSV files.
    #[arg(long = "runs", required = true)]
    pub runs: Vec<PathBuf>,
    /// Buffer to export a coverage scatter for.
    #[arg(long)]
    pub coverage: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(required = true)]
    pub artifacts: Vec<PathBuf>,
}

/// Process exit code for an error: 2 for bad input, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_usage() {
        2
    } else {
        1
    }
}

/// Runs an already parsed command line. `argv` is recorded in manifests.
pub fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::usage("--workers must be at least 1"));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut st = Settings::load(cli.config.as_deref())?;
    let ctx = commands::Ctx { root: cli.root, argv };
    match cli.command {
        Command::Calibrate(a) => commands::calibrate(&ctx, &mut st, a),
        Command::Explore(a) => commands::explore(&ctx, &mut st, a),
        Command::TrainLlc(a) => commands::train_llc(&ctx, &mut st, a),
        Command::Optimize(a) => commands::optimize(&ctx, &mut st, a),
        Command::Landscape(a) => commands::landscape(&ctx, &mut st, a),
        Command::Report(a) => commands::report(&ctx, &mut st, a),
        Command::Verify(a) => commands::verify(a),
    }
}

/// Parses and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let argv = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
