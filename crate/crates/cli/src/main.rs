//! `microcanon`: solve, sweep and sample micro-canonical occupancy ensembles
//! from a JSON config, writing JSON or CSV.
//!
//! Exit status is 0 on success, 1 on a numeric failure and 2 on a config
//! error; failures also print a one-line JSON record on stderr.

mod commands;
mod config;
mod csv;
mod failure;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use microcanon::ensemble::DEFAULT_BUDGET;

use commands::RunOptions;
use config::ExperimentConfig;
use failure::Failure;

#[derive(Parser)]
#[command(name = "microcanon", version, about = "Micro-canonical occupancy ensemble experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Limiting maximum-entropy solution as JSON.
    Solve(Common),
    /// Per-N error of the exact mean and mgf against the limit.
    LlnSweep(Common),
    /// Per-N empirical fluctuations against the predicted law.
    FluctCheck(Common),
    /// Per-N entropy approximation error at the configured `x`.
    EntropyProbe(Common),
    /// Draws from the exact pmf or a Metropolis chain.
    Sample(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (flat JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for per-N work; 0 picks the core count.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Largest enumeration size estimate accepted.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let failure = Failure::config("usage", e.to_string().trim_end().to_string());
            eprintln!("{}", failure.to_json());
            return failure.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{}", failure.to_json());
            failure.exit_code()
        }
    }
}

type Body = fn(&ExperimentConfig, RunOptions) -> Result<String, Failure>;

fn run(command: Command) -> Result<(), Failure> {
    let (common, body): (&Common, Body) = match &command {
        Command::Solve(c) => (c, |cfg, _| commands::cmd_solve(cfg)),
        Command::LlnSweep(c) => (c, commands::cmd_lln_sweep),
        Command::FluctCheck(c) => (c, commands::cmd_fluct_check),
        Command::EntropyProbe(c) => (c, commands::cmd_entropy_probe),
        Command::Sample(c) => (c, commands::cmd_sample),
    };
    let cfg = ExperimentConfig::load(&common.config)?;
    let opts = RunOptions { jobs: common.jobs, seed: common.seed, budget: common.budget };
    let text = body(&cfg, opts)?;
    match &common.out {
        Some(path) => {
            fs::write(path, text).map_err(|e| Failure::config("io", format!("cannot write {}: {e}", path.display())))
        }
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::numeric("io", format!("cannot write stdout: {e}"))),
    }
}
