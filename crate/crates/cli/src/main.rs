//! `feint`: batch runner for template precomputation, composition,
//! simulation, training, pool evaluation and overhead benchmarking.
//!
//! Every run writes its artifacts and a `manifest.json` into `--out-dir`.
//! On failure it writes `error.json` there (when the directory is usable),
//! prints the same record to stderr and exits with status 1.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] feint_core::Error),
    #[error("io error: {0}")]
    Io(String),
    #[error("usage error: {0}")]
    Usage(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io(_) => "io",
            CliError::Usage(_) => "usage",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "feint",
    version,
    about = "Feint behavior toolkit for a desk-scale combat simulator"
)]
pub struct Cli {
    /// Scenario config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Catalog file; overrides the one named in the config.
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub episodes: Option<usize>,
    /// Comma-separated agent indices that get the feint layer.
    #[arg(long, global = true)]
    pub feint_agents: Option<String>,
    /// Regular-policy learner. Only `actor-critic` is built in.
    #[arg(long, global = true)]
    pub learner: Option<String>,
    /// kl, tv or hellinger.
    #[arg(long, global = true)]
    pub f_divergence: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Precompute feint templates for a catalog.
    Templates {
        /// Also accept junctions between actions with similar start and end states.
        #[arg(long)]
        similar: bool,
    },
    /// Compose dual-behavior models from a start action to a target action.
    Compose {
        #[arg(long)]
        from: String,
        #[arg(long)]
        target: String,
    },
    /// Play frozen-policy episodes and log every event.
    Simulate,
    /// Train the scenario's learners.
    Train,
    /// Evaluate policy pools with and without the feint layer.
    Evaluate {
        /// Episodes each feint-enabled policy trains its feint layer before evaluation.
        #[arg(long, default_value_t = 600)]
        pretrain: usize,
    },
    /// Time training with the feint layer on and off.
    BenchOverhead,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Templates { .. } => "templates",
            Command::Compose { .. } => "compose",
            Command::Simulate => "simulate",
            Command::Train => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::BenchOverhead => "bench-overhead",
        }
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    subcommand: &'a str,
    kind: &'a str,
    message: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = ErrorRecord {
                subcommand: cli.command.name(),
                kind: e.kind(),
                message: e.to_string(),
            };
            let text = serde_json::to_string(&record)
                .unwrap_or_else(|_| format!("{{\"message\":{:?}}}", e.to_string()));
            eprintln!("{text}");
            if let Some(dir) = &cli.out_dir {
                if std::fs::create_dir_all(dir).is_ok() {
                    let _ = std::fs::write(dir.join("error.json"), format!("{text}\n"));
                }
            }
            ExitCode::FAILURE
        }
    }
}
