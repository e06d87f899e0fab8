//! `msnn`: synthesise data, train, evaluate and analyse multi-scale EEG models.

mod analyze;
mod config;
mod eval;
mod output;
mod pipeline;
mod synth;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Bad flags or configuration, reported with exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(name = "msnn", version, about = "Multi-scale convolutional networks for EEG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a ground-truth sidecar
    Synth(synth::SynthArgs),
    /// Train a model on an epoch file
    Train(train::TrainArgs),
    /// Score a trained model, or run cross-validation
    Eval(eval::EvalArgs),
    /// Relevance maps, spectra, activation patterns, features and PSDs
    Analyze(analyze::AnalyzeArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth::run(&a),
        Command::Train(a) => train::run(&a),
        Command::Eval(a) => eval::run(&a),
        Command::Analyze(a) => analyze::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
