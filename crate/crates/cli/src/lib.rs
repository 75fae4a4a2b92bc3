//! Command-line surface: parameter counts, gradient checks, synthetic data,
//! training and scoring.

pub mod cmd;
pub mod error;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "tfdsed", version, about = "Frequency dynamic convolution sound event detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the trainable parameter count and its breakdown.
    Params(cmd::params::ParamsArgs),
    /// Run the finite-difference gradient suites.
    Gradcheck(cmd::gradcheck::GradcheckArgs),
    /// Generate a synthetic dataset.
    Synth(cmd::synth::SynthArgs),
    /// Train a student/teacher pair.
    Train(cmd::train::TrainArgs),
    /// Score checkpoints; optionally compare groups of runs.
    Eval(cmd::eval::EvalArgs),
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Params(a) => cmd::params::run(a),
        Command::Gradcheck(a) => cmd::gradcheck::run(a),
        Command::Synth(a) => cmd::synth::run(a),
        Command::Train(a) => cmd::train::run(a),
        Command::Eval(a) => cmd::eval::run(a),
    }
}
