use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use spikeshot_core::gateway::{text_path, visual_path, write_ncem};
use spikeshot_core::synthetic::{generate, SyntheticSpec};

use crate::error::CliResult;
use crate::util::{atomic_write, to_json, with_workers};

/// Writes a synthetic embedding benchmark in the layout `zeroshot` and `fewshot` read.
#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; receives manifest.json and embeddings/.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub timesteps: usize,
    #[arg(long, default_value_t = 32)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 25)]
    pub test_per_class: usize,
    /// Weight of the next class's text direction in each visual class mean.
    #[arg(long, default_value_t = 1.0)]
    pub confusion: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

pub fn run(args: &SynthArgs) -> CliResult<()> {
    let spec = SyntheticSpec {
        classes: args.classes,
        dim: args.dim,
        timesteps: args.timesteps,
        train_per_class: args.train_per_class,
        test_per_class: args.test_per_class,
        confusion: args.confusion,
        noise: args.noise,
        seed: args.seed,
    };
    let set = generate(&spec)?;
    let dir = args.out.join("embeddings");
    atomic_write(&text_path(&dir), &write_ncem(&set.text))?;
    with_workers(args.workers, || {
        set.samples
            .par_iter()
            .map(|s| atomic_write(&visual_path(&dir, &s.id), &write_ncem(&s.features)))
            .collect::<CliResult<()>>()
    })??;
    let mut manifest = set.manifest.clone();
    manifest.dim = Some(set.dim());
    atomic_write(
        &args.out.join("manifest.json"),
        manifest.to_json().as_bytes(),
    )?;
    let echo = serde_json::json!({
        "command": "synth",
        "config": {
            "out": args.out.display().to_string(),
            "classes": spec.classes,
            "dim": spec.dim,
            "timesteps": spec.timesteps,
            "train_per_class": spec.train_per_class,
            "test_per_class": spec.test_per_class,
            "confusion": spec.confusion,
            "noise": spec.noise,
            "seed": spec.seed,
        },
        "samples": set.samples.len(),
    });
    atomic_write(&args.out.join("synth.json"), to_json(&echo).as_bytes())?;
    eprintln!(
        "wrote {} samples to {}",
        set.samples.len(),
        args.out.display()
    );
    Ok(())
}
