use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use super::classify::{self, DataArgs, DataConfig, FusionArgs, FusionEcho, GridPoint, Metrics};
use crate::config::ConfigFile;
use crate::error::CliResult;
use crate::util::emit_report;

#[derive(Debug, Args)]
pub struct ZeroshotArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fusion: FusionArgs,
    /// Report path [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-sample predictions as JSON lines.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Include the full probability vector in each prediction line.
    #[arg(long)]
    pub probabilities: bool,
}

#[derive(Serialize)]
struct Config<'a> {
    #[serde(flatten)]
    data: &'a DataConfig,
    #[serde(flatten)]
    fusion: &'a FusionEcho,
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'static str,
    config: Config<'a>,
    dataset: &'a str,
    timesteps: usize,
    metrics: Metrics,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    alpha_search: Vec<GridPoint>,
}

pub fn run(args: &ZeroshotArgs) -> CliResult<()> {
    let file = ConfigFile::load(args.data.config.as_deref())?;
    let loaded = classify::load(&args.data, &file)?;
    let set = &loaded.set;
    let workers = loaded.config.workers;
    let (fusion, echo, search) = classify::resolve_fusion(&args.fusion, &file, set, workers)?;
    let preds = classify::zero_shot(set, loaded.split, workers, &fusion)?;
    let metrics = classify::metrics(set, loaded.split, &preds)?;
    if let Some(path) = &args.predictions {
        classify::write_predictions(path, set, &preds, args.probabilities)?;
    }
    eprintln!(
        "zero-shot accuracy on {}: {:.4} ({}/{})",
        classify::split_name(loaded.split),
        metrics.accuracy,
        metrics.correct,
        metrics.total
    );
    let report = Report {
        command: "zeroshot",
        config: Config {
            data: &loaded.config,
            fusion: &echo,
        },
        dataset: &set.manifest.dataset,
        timesteps: set.manifest.timesteps,
        metrics,
        alpha_search: search,
    };
    emit_report(&report, args.out.as_deref())
}
