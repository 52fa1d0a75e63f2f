//! Command-line interface for the deconfounding flow toolkit.
//!
//! Subcommands cover the full workflow: `generate` synthetic confounded
//! datasets with exact ground truth, `identify` causal queries from the
//! graph alone, `train` a model on observational data, `query` it with
//! interventions and counterfactuals, `eval` it against the data-generating
//! oracle, and `plot` aggregated evaluation reports.
//!
//! Exit codes: 0 on success, 2 on invalid input, 3 when a query is refused
//! because the requested effect is not identifiable from the graph.

mod eval;
mod generate;
mod identify;
mod manifest;
mod plot;
mod query;
mod svg;
mod train_cmd;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad input: unknown nodes, malformed files, invalid configuration.
    Invalid(String),
    /// The request was well-formed but the effect is not identifiable.
    Refused(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(msg) => write!(f, "{msg}"),
            CliError::Refused(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

macro_rules! invalid_from {
    ($($ty:ty),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Invalid(e.to_string())
            }
        })*
    };
}

invalid_from!(
    causal_graph::GraphError,
    scm_lab::ScmError,
    flow_core::FlowError,
    decaflow::ModelError,
    decaflow::TrainError,
    decaflow::ArchiveError,
    metrics::MetricError,
    std::io::Error,
    serde_json::Error,
);

#[derive(Parser)]
#[command(name = "decaflow", version, about = "Deconfounding causal flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic confounded SCM to CSV with exact ground truth.
    Generate(generate::GenerateArgs),
    /// Check identifiability of queries or classify every edge of a graph.
    Identify(identify::IdentifyArgs),
    /// Train a deconfounding flow model on a dataset.
    Train(train_cmd::TrainArgs),
    /// Run interventional and counterfactual queries on a trained model.
    Query(query::QueryArgs),
    /// Score a model (or a directory of answers) against the SCM oracle.
    Eval(eval::EvalArgs),
    /// Render summary figures from evaluation reports.
    Plot(plot::PlotArgs),
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(args) => generate::run(args),
        Command::Identify(args) => identify::run(args),
        Command::Train(args) => train_cmd::run(args),
        Command::Query(args) => query::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Plot(args) => plot::run(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Refused(msg)) => {
            eprintln!("refused: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
