//! `corefed` command-line front end.
//!
//! Exit codes: 0 success, 1 other runtime failure, 2 configuration error,
//! 3 non-positive utility, 4 solver non-convergence.

// NaN must fail range checks, so `!(x > 0.0)` is intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "corefed", version, about = "Core-stable federated learning: generate, train, audit, report")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Run-spec selection shared by the commands that read a config.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run specification.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `federation.aggregator` (fedavg, corefed, weighted-corefed).
    #[arg(long)]
    pub aggregator: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the dataset, split it across agents and write `<out>/data`.
    Generate(RunArgs),
    /// Run federated training and write `<out>/<aggregator>`.
    Train(RunArgs),
    /// Compare two checkpoints, or audit a utility matrix.
    Audit(commands::AuditArgs),
    /// Tabulate the summaries of several runs.
    Report(commands::ReportArgs),
}

/// A command failure, carrying its exit code class.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Utility(String),
    NotConverged(String),
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Utility(_) => 3,
            Failure::NotConverged(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Utility(m) | Failure::NotConverged(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<corefed::Error> for Failure {
    fn from(e: corefed::Error) -> Self {
        use corefed::Error as E;
        let msg = e.to_string();
        match e.root() {
            E::NonPositiveUtility { .. } => Failure::Utility(msg),
            E::NotConverged(_) => Failure::NotConverged(msg),
            E::InvalidParams(_)
            | E::InvalidK { .. }
            | E::MissingColumn(_)
            | E::NonBinaryTarget { .. }
            | E::NotLabeled(_)
            | E::TooManyAgents { .. }
            | E::AgentWithNoData { .. }
            | E::MalformedRow { .. } => Failure::Config(msg),
            E::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Failure::Config(msg),
            _ => Failure::Runtime(msg),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::generate(&args),
        Command::Train(args) => commands::train(&args),
        Command::Audit(args) => commands::audit(&args),
        Command::Report(args) => commands::report(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
