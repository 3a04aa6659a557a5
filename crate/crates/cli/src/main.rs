//! `keydet`: train, run and benchmark a learned local feature detector.
//!
//! The binary is a thin shell over the `keydet-core` library: subcommands
//! build patch archives, train detector checkpoints, extract keypoints
//! from images, score benchmark sequences, and audit gradients. Every command
//! resolves its settings as defaults < config file < flags, and stamps the
//! SHA-256 of the resolved configuration into everything it writes.
//!
//! Exit codes: 0 success; 1 numeric failure (non-finite loss, failed
//! gradient audit); 2 invalid input; 3 I/O or corrupt-file error.

mod commands;
mod config;
mod error;
mod formats;
mod imageio;
mod parallel;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "keydet", version, about = "Covariant keypoint detector pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a training archive of patch tuples.
    MakePatches(commands::make_patches::MakePatchesArgs),
    /// Render synthetic benchmark sequences with ground-truth homographies.
    MakeSequences(commands::make_sequences::MakeSequencesArgs),
    /// Train a detector on a patch archive.
    Train(commands::train::TrainArgs),
    /// Extract keypoints from images with a trained checkpoint.
    Extract(commands::extract::ExtractArgs),
    /// Benchmark detections over sequences (repeatability, matching score).
    Eval(commands::eval::EvalArgs),
    /// Audit analytic gradients against finite differences.
    Gradcheck(commands::gradcheck::GradcheckArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::MakePatches(args) => commands::make_patches::run(args),
        Command::MakeSequences(args) => commands::make_sequences::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Extract(args) => commands::extract::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
