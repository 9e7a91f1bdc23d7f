//! `corepair` command-line entry point.
//!
//! Exit codes: 0 success, 1 some items failed (or output could not be
//! written), 2 configuration or usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "corepair", version, about = "Interactive chain-of-repair code generation and evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Engine configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Concurrent episodes or executions (overrides `parallelism`).
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Repair turn limit (overrides `repair.max_turns`).
    #[arg(long, global = true)]
    pub max_turns: Option<usize>,
    /// Repair mode for `repair`, prompting mode for `generate`.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Keep finished trajectories in the output directory and skip their tasks.
    #[arg(long, global = true)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct TaskInput {
    /// Task file (JSONL).
    #[arg(long)]
    pub tasks: PathBuf,
    /// Task file layout: generic, humaneval or mbpp.
    #[arg(long, default_value = "generic")]
    pub format: String,
    /// For MBPP: keep only the evaluation ids 11..=510.
    #[arg(long)]
    pub eval_slice: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one program per task without repair.
    Generate {
        #[command(flatten)]
        input: TaskInput,
    },
    /// Run the interactive repair loop over tasks or a repair benchmark.
    Repair {
        /// Task file; the learner writes the first program.
        #[arg(long, conflicts_with = "code_error", required_unless_present = "code_error")]
        tasks: Option<PathBuf>,
        /// Repair-benchmark file; episodes start from its buggy code.
        #[arg(long)]
        code_error: Option<PathBuf>,
        #[arg(long, default_value = "generic")]
        format: String,
        #[arg(long)]
        eval_slice: bool,
    },
    /// Aggregate trajectories into report.json, report.csv and report.txt.
    Eval {
        /// Directory of trajectory files (a run's output directory also works).
        #[arg(long)]
        trajectories: PathBuf,
        /// Repair-benchmark file, for repair rates by error type.
        #[arg(long)]
        code_error: Option<PathBuf>,
    },
    /// Execute candidate programs and keep the failing ones as a benchmark.
    Build {
        #[command(flatten)]
        input: TaskInput,
        /// Candidates JSONL: {"task_id": ..., "code": ...} per line.
        #[arg(long)]
        candidates: PathBuf,
    },
    /// Print the statistics table of a repair benchmark.
    Stats {
        #[arg(long)]
        code_error: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
