use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod util;

use commands::{convert, eval, fewshot, project, reproduce, synth, zeroshot};

/// Event-camera recordings to frames, zero-shot and few-shot classification.
#[derive(Debug, Parser)]
#[command(name = "spikeshot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Project recordings into frame stacks and write a manifest.
    Project(project::ProjectArgs),
    /// Classify with frozen text and visual embeddings.
    Zeroshot(zeroshot::ZeroshotArgs),
    /// Train the spiking adapter on a few samples per class.
    Fewshot(fewshot::FewshotArgs),
    /// Score predictions or a saved adapter.
    Eval(eval::EvalArgs),
    /// Compare against the published reference accuracies.
    Reproduce(reproduce::ReproduceArgs),
    /// Decode one recording to CSV.
    Convert(convert::ConvertArgs),
    /// Generate a synthetic embedding benchmark.
    Synth(synth::SynthArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Project(a) => project::run(a),
        Command::Zeroshot(a) => zeroshot::run(a),
        Command::Fewshot(a) => fewshot::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Reproduce(a) => reproduce::run(a),
        Command::Convert(a) => convert::run(a),
        Command::Synth(a) => synth::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
