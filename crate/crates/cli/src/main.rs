//! Command-line entry point: synthetic data, corpus analysis, training,
//! cross-validation, evaluation and gradient checking.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{ConfigError, Overrides};

#[derive(Parser)]
#[command(name = "han-affect", version, about = "Hierarchical attention networks with affective lexicon conditioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with toy lexica.
    Synth {
        /// JSON generator spec; defaults apply to missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Turn, vocabulary and affective-category statistics.
    Analyze {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train one model on a stratified train/validation split.
    Train {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Stratified k-fold cross-validation.
    Cv {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a saved model on the configured corpus.
    Eval {
        #[command(flatten)]
        overrides: Overrides,
        /// Model file written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare analytic and finite-difference gradients of the full loss.
    Gradcheck {
        #[command(flatten)]
        overrides: Overrides,
        /// Number of coordinates to check; all when omitted.
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env_seed = std::env::var(config::SEED_ENV).ok();
    let env_seed = env_seed.as_deref();
    let result = match cli.command {
        Command::Synth { spec, out, seed } => commands::synth(spec.as_deref(), &out, seed, env_seed),
        Command::Analyze { overrides } => commands::analyze(&overrides, env_seed),
        Command::Train { overrides } => commands::train(&overrides, env_seed),
        Command::Cv { overrides } => commands::cv(&overrides, env_seed),
        Command::Eval { overrides, checkpoint } => commands::eval(&overrides, &checkpoint, env_seed),
        Command::Gradcheck { overrides, samples } => commands::gradcheck(&overrides, samples, env_seed),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            if let Some(c) = e.downcast_ref::<ConfigError>() {
                eprintln!("error: {c}");
                ExitCode::from(2)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        }
    }
}
