//! Batch CLI for the pairwise-ranking OOD detector and its baselines.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use molepair::cli;

#[derive(Parser)]
#[command(
    name = "molepair",
    version,
    about = "Pairwise-ranking OOD detection on fixed embeddings: data generation, training, baselines, metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-Gaussian dataset from a world config.
    GenSynth {
        /// World + counts JSON.
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the ranking detector and evaluate it on the test split.
    Train {
        /// Dataset (.csv or binary).
        #[arg(long)]
        data: PathBuf,
        /// Training parameters JSON (defaults used when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score the test split with one of the classical baselines.
    Baseline {
        #[arg(long)]
        data: PathBuf,
        /// msp | odin | energy | mahalanobis | knn | lof
        #[arg(long)]
        method: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Shared classifier checkpoint to reuse (trained here when absent).
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute metrics from an id,method,score CSV.
    Metrics {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// One training run per (beta, lambda) grid point; collects test AUROC.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated list of beta values.
        #[arg(long, value_delimiter = ',', required = true)]
        beta: Vec<f64>,
        /// Comma-separated list of lambda values.
        #[arg(long, value_delimiter = ',', required = true)]
        lambda: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Gradient-weight group summary of a finished training run.
    Dynamics {
        /// Run directory produced by `train`.
        #[arg(long)]
        run: PathBuf,
        /// Dataset path override (defaults to the one recorded in the run).
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let result = match args.command {
        Command::GenSynth { config, out, seed } => cli::cmd_gen_synth(&config, &out, seed),
        Command::Train {
            data,
            config,
            out,
            seed,
        } => cli::cmd_train(&data, config.as_deref(), &out, seed),
        Command::Baseline {
            data,
            method,
            config,
            out,
            classifier,
            seed,
        } => cli::cmd_baseline(
            &data,
            &method,
            config.as_deref(),
            &out,
            classifier.as_deref(),
            seed,
        ),
        Command::Metrics { data, scores, out } => cli::cmd_metrics(&data, &scores, &out),
        Command::Ablate {
            data,
            config,
            out,
            beta,
            lambda,
            seed,
        } => cli::cmd_ablate(&data, config.as_deref(), &out, &beta, &lambda, seed),
        Command::Dynamics { run, data } => cli::cmd_dynamics(&run, data.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
