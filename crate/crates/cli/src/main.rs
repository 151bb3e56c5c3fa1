use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod output;

/// Composition experiments, functor-law checks, training and likelihood
/// tables for stochastic-process arrows.
#[derive(Debug, Parser)]
#[command(name = "stochcat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    cfg: RunConfig,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunConfig {
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Monte Carlo draws per sample set.
    #[arg(long, global = true, default_value_t = 100_000)]
    pub samples: usize,
    /// Two-sample KS bound for laws that must agree.
    #[arg(long, global = true, default_value_t = 0.02)]
    pub ks_threshold: f64,
    #[arg(long, global = true, default_value_t = 0.01)]
    pub epsilon: f64,
    /// Training passes over the data.
    #[arg(long, global = true, default_value_t = 200)]
    pub iterations: usize,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// JSON list of Gaussian layers.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// CSV with header `x0..,y0..`.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample `5 − x + 10·Φ⁻¹(ω)` at x = 42 alone, self-composed with
    /// independent noise and self-composed with shared noise.
    ComposeDemo,
    /// Run the pushforward, Copy and independence suites.
    FunctorCheck {
        /// JSON list of `{name, f, g, x}` pair descriptions replacing the built-in
        /// corpus.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Fit the mean-map parameters of a model by gradient descent.
    Train,
    /// Tabulate a model's likelihood and check it composes.
    Likelihood,
    /// Write a synthetic regression dataset `y = 2x + 1 + N(0, 0.25)`.
    SynthData {
        #[arg(long, default_value_t = 1000)]
        rows: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::ComposeDemo => commands::compose_demo(&cli.cfg),
        Command::FunctorCheck { pairs } => commands::functor_check(&cli.cfg, pairs.as_deref()),
        Command::Train => commands::train(&cli.cfg),
        Command::Likelihood => commands::likelihood(&cli.cfg),
        Command::SynthData { rows } => commands::synth_data(&cli.cfg, *rows),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more required checks failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
