//! `crossattn`: drives the predictor, selection, attention, cost and mesh
//! experiments from JSON configs and writes machine-readable reports.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "crossattn", version, about = "Cross-stage sparse attention experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Predict, select and attend on a synthetic workload.
    Pipeline(Common),
    /// Tiling-overhead, selection-complexity, update-order and DSE tables.
    Curves(Common),
    /// Ring-schedule validation plus distributed and baseline mesh runs.
    Mesh(Common),
    /// Quantize a weight matrix and write its leading-zero codes.
    EncodeWeights(Common),
    /// Build and check ring schedules for a list of ring lengths.
    ValidateMrca(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

/// Exit status classes.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or invalid configuration (exit 2).
    Config(String),
    /// Numeric or property failure during the run (exit 3).
    Run(String),
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<crossattn_core::Error> for Failure {
    fn from(e: crossattn_core::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(format!("io error: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Run(format!("json error: {e}"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Pipeline(c) => commands::pipeline(c),
        Command::Curves(c) => commands::curves(c),
        Command::Mesh(c) => commands::mesh(c),
        Command::EncodeWeights(c) => commands::encode_weights(c),
        Command::ValidateMrca(c) => commands::validate_mrca(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(3)
        }
    }
}
