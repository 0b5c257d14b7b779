//! `frameseek`: train frame encoders, build latent indexes, query and
//! evaluate retrieval.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use frameseek_core::Error as CoreError;

#[derive(Parser)]
#[command(
    name = "frameseek",
    version,
    about = "Latent-space frame compression and retrieval"
)]
struct Cli {
    /// Flat `key = value` config file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for data generation, training and evaluation.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic frame corpus (PNGs + manifest.csv).
    GenData(commands::GenDataArgs),
    /// Train the classical convolutional autoencoder.
    TrainAe(commands::TrainAeArgs),
    /// Train the variational autoencoder.
    TrainVae(commands::TrainVaeArgs),
    /// Train the Siamese re-ranker on labeled pairs.
    TrainSiamese(commands::TrainSiameseArgs),
    /// Encode a corpus into a latent index file.
    BuildIndex(commands::BuildIndexArgs),
    /// Retrieve the nearest frames for one query image.
    Query(commands::QueryArgs),
    /// Run the four-method TP/FP/precision evaluation.
    Eval(commands::EvalArgs),
    /// Render a compression report from build-index stats files.
    Report(commands::ReportArgs),
}

/// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CoreError>() {
        Some(
            CoreError::InvalidConfig(_)
            | CoreError::InvalidPairLabel(_)
            | CoreError::DimMismatch { .. },
        ) => 2,
        Some(
            CoreError::Io { .. }
            | CoreError::Decode { .. }
            | CoreError::Manifest { .. }
            | CoreError::ManifestMissingFrame { .. }
            | CoreError::BadMagic { .. }
            | CoreError::UnsupportedVersion { .. }
            | CoreError::Truncated(_)
            | CoreError::ChecksumMismatch
            | CoreError::FrameNotFound { .. }
            | CoreError::EmptyCorpus(_)
            | CoreError::Unlabeled(_),
        ) => 3,
        Some(
            CoreError::Numeric(_)
            | CoreError::Shape(_)
            | CoreError::NonScalarLoss(_)
            | CoreError::BackwardAlreadyRun,
        ) => 4,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }

    let ctx = match commands::Context::new(cli.config.as_deref(), cli.seed) {
        Ok(ctx) => ctx,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };

    let result = match cli.command {
        Command::GenData(args) => commands::gen_data(&ctx, args),
        Command::TrainAe(args) => commands::train_ae(&ctx, args),
        Command::TrainVae(args) => commands::train_vae(&ctx, args),
        Command::TrainSiamese(args) => commands::train_siamese(&ctx, args),
        Command::BuildIndex(args) => commands::build_index(&ctx, args),
        Command::Query(args) => commands::query(&ctx, args),
        Command::Eval(args) => commands::eval(&ctx, args),
        Command::Report(args) => commands::report(&ctx, args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
