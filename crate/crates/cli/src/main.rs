//! Config-driven command-line pipeline: data generation, training,
//! denoising, ablations, evaluation, and the (T, w) grid search.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{key_help, RunConfig, UsageError};

#[derive(Parser)]
#[command(
    name = "pflow",
    about = "Posterior-sampling Poisson flow denoising pipeline",
    after_help = key_help(),
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Overwrite non-empty output directories.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired dataset.
    GenData,
    /// Train the conditional denoiser.
    Train,
    /// Denoise condition images with the trained model.
    Denoise,
    /// Run the hijack/regularization ablation arms and the T sweep.
    Ablate,
    /// Compute PSNR/SSIM/MSE reports for denoised outputs.
    Eval,
    /// Grid search over (T, w) in the single-step configuration.
    GridSearch,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Ok(threads) = std::env::var("PFLOW_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }

    let config = match RunConfig::resolve(cli.config.as_deref(), &cli.sets) {
        Ok(c) => c,
        Err(e) => return exit_with(e),
    };

    let result = match cli.command {
        Command::GenData => commands::gen_data::run(&config, cli.force),
        Command::Train => commands::train::run(&config, cli.force),
        Command::Denoise => commands::denoise::run(&config, cli.force),
        Command::Ablate => commands::ablate::run(&config, cli.force),
        Command::Eval => commands::eval::run(&config, cli.force),
        Command::GridSearch => commands::grid_search::run(&config, cli.force),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => exit_with(e),
    }
}

fn exit_with(e: anyhow::Error) -> ExitCode {
    eprintln!("error: {e:#}");
    if e.chain().any(|c| c.is::<UsageError>()) {
        ExitCode::from(2)
    } else {
        ExitCode::FAILURE
    }
}
