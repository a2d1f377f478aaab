//! Command-line frontend for the EIT damage characterization pipeline.
//!
//! Exit codes: 0 on success, 1 when a stage reports a diagnostic error
//! (bad input file, solver failure, unsatisfiable constraints), 2 on
//! command-line usage errors. No subcommand modifies an input file; every
//! artifact-producing run writes a run manifest next to its primary
//! output so the run can be reproduced from its recorded seeds.

mod cache;
mod gen;
mod manifest;
mod model;
mod physics;
mod plot;

use std::fmt;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "eit",
    version,
    about = "Simulated EIT damage detection: data generation, reconstruction, and hole characterization",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled reconstruction dataset (JSON lines + manifest).
    GenDataset(gen::GenDatasetArgs),
    /// Train a hole count, radius, or center network on a dataset.
    Train(model::TrainArgs),
    /// Evaluate a trained network on a dataset's test split.
    Eval(model::EvalArgs),
    /// Run the full chain (classifier, k-means, regressors) per record.
    Predict(model::PredictArgs),
    /// Simulate one measurement cycle and print the voltage frame.
    ForwardSolve(physics::ForwardSolveArgs),
    /// Reconstruct a conductivity change from a stored frame pair.
    Reconstruct(physics::ReconstructArgs),
    /// Rasterize a conductivity change to a grayscale PNG.
    Render(plot::RenderArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenDataset(args) => gen::run(args),
        Command::Train(args) => model::train(args),
        Command::Eval(args) => model::eval(args),
        Command::Predict(args) => model::predict(args),
        Command::ForwardSolve(args) => physics::forward_solve(args),
        Command::Reconstruct(args) => physics::reconstruct(args),
        Command::Render(args) => plot::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// An f64 flag with a sentinel: "none" (noise) or "auto" (alpha) map to
/// `None`, anything else must parse as a number.
#[derive(Debug, Clone, Copy)]
pub struct OptF64(pub Option<f64>);

impl FromStr for OptF64 {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" | "auto" => Ok(OptF64(None)),
            other => other
                .parse::<f64>()
                .map(|v| OptF64(Some(v)))
                .map_err(|e| format!("expected a number, \"auto\", or \"none\": {e}")),
        }
    }
}

impl fmt::Display for OptF64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v}"),
            None => write!(f, "none"),
        }
    }
}

/// A usize flag where "none" disables the feature.
#[derive(Debug, Clone, Copy)]
pub struct OptUsize(pub Option<usize>);

impl FromStr for OptUsize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(OptUsize(None)),
            other => other
                .parse::<usize>()
                .map(|v| OptUsize(Some(v)))
                .map_err(|e| format!("expected a count or \"none\": {e}")),
        }
    }
}

/// Print one row of an aligned key/value summary.
pub fn kv(label: &str, value: impl fmt::Display) {
    println!("{label:<18} {value}");
}
