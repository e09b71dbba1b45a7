use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use spikeshot_core::adapter::read_checkpoint;
use spikeshot_core::fusion::evaluate;
use spikeshot_core::Split;

use super::classify::{self, DataArgs, DataConfig, FusionArgs, FusionEcho, Metrics};
use crate::config::ConfigFile;
use crate::error::{CliError, CliResult};
use crate::util::{emit_report, SplitArg};

/// Scores a predictions file, or re-runs classification (optionally through a
/// saved adapter) and scores that.
#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fusion: FusionArgs,
    /// JSON-lines predictions to score instead of classifying.
    #[arg(long, conflicts_with = "checkpoint")]
    pub predictions: Option<PathBuf>,
    /// NCAD adapter to apply before fusion.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Report path [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct PredictionLine {
    id: String,
    argmax: usize,
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'static str,
    config: serde_json::Value,
    dataset: &'a str,
    metrics: Metrics,
}

fn read_predictions(path: &std::path::Path) -> CliResult<HashMap<String, usize>> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::missing(format!("predictions file {} not found", path.display()))
        } else {
            CliError::input(format!("cannot read {}: {e}", path.display()))
        }
    })?;
    let mut out = HashMap::new();
    for (n, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let p: PredictionLine = serde_json::from_str(line)
            .map_err(|e| CliError::input(format!("{} line {}: {e}", path.display(), n + 1)))?;
        if out.insert(p.id.clone(), p.argmax).is_some() {
            return Err(CliError::input(format!(
                "duplicate prediction for {}",
                p.id
            )));
        }
    }
    Ok(out)
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let file = ConfigFile::load(args.data.config.as_deref())?;
    if let Some(path) = &args.predictions {
        return score_file(args, &file, path);
    }
    let loaded = classify::load(&args.data, &file)?;
    let set = &loaded.set;
    let workers = loaded.config.workers;
    let (fusion, echo, _) = classify::resolve_fusion(&args.fusion, &file, set, workers)?;
    let checkpoint = file.pick_opt(args.checkpoint.clone(), "checkpoint")?;
    let preds = match &checkpoint {
        Some(path) => {
            let bytes = fs::read(path).map_err(|_| {
                CliError::missing(format!("checkpoint {} not found", path.display()))
            })?;
            let params = read_checkpoint(&bytes)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            classify::with_adapter(set, loaded.split, workers, &fusion, &params)?
        }
        None => classify::zero_shot(set, loaded.split, workers, &fusion)?,
    };
    let metrics = classify::metrics(set, loaded.split, &preds)?;
    eprintln!(
        "accuracy: {:.4} ({}/{})",
        metrics.accuracy, metrics.correct, metrics.total
    );

    #[derive(Serialize)]
    struct Config<'a> {
        #[serde(flatten)]
        data: &'a DataConfig,
        #[serde(flatten)]
        fusion: &'a FusionEcho,
        checkpoint: Option<String>,
    }
    let config = serde_json::to_value(Config {
        data: &loaded.config,
        fusion: &echo,
        checkpoint: checkpoint.map(|p| p.display().to_string()),
    })
    .expect("config serializes");
    emit_report(
        &Report {
            command: "eval",
            config,
            dataset: &set.manifest.dataset,
            metrics,
        },
        args.out.as_deref(),
    )
}

fn score_file(args: &EvalArgs, file: &ConfigFile, path: &std::path::Path) -> CliResult<()> {
    let manifest = classify::load_manifest(&args.data.manifest)?;
    let split_arg = file.pick(args.data.split, "split", SplitArg::Test)?;
    let split: Split = split_arg.into();
    let predictions = read_predictions(path)?;
    let k = manifest.classes.len();
    let mut predicted = Vec::new();
    let mut labels = Vec::new();
    for r in manifest.records.iter().filter(|r| r.split == split) {
        let p = *predictions
            .get(&r.id)
            .ok_or_else(|| CliError::input(format!("no prediction for {}", r.id)))?;
        if p >= k {
            return Err(CliError::input(format!(
                "prediction {p} for {} is not a class index",
                r.id
            )));
        }
        predicted.push(p);
        labels.push(r.label);
    }
    if predicted.is_empty() {
        return Err(CliError::input(format!(
            "the {split_arg} split has no samples"
        )));
    }
    let metrics = Metrics::new(evaluate(&predicted, &labels, k)?, &manifest.classes);
    eprintln!(
        "accuracy: {:.4} ({}/{})",
        metrics.accuracy, metrics.correct, metrics.total
    );
    let config = serde_json::json!({
        "manifest": args.data.manifest.display().to_string(),
        "predictions": path.display().to_string(),
        "split": split_arg,
    });
    emit_report(
        &Report {
            command: "eval",
            config,
            dataset: &manifest.dataset,
            metrics,
        },
        args.out.as_deref(),
    )
}
