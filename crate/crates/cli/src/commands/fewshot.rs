use std::path::PathBuf;

use clap::Args;
use log::info;
use serde::Serialize;
use spikeshot_core::adapter::{read_checkpoint, train_few_shot, write_checkpoint, EpochLog};
use spikeshot_core::{
    AdapterParams, EmbeddingSet, FusionConfig, LifParams, Prediction, Split, TrainConfig,
};

use super::classify::{self, DataArgs, DataConfig, FusionArgs, FusionEcho, GridPoint, Metrics};
use crate::config::ConfigFile;
use crate::error::{CliError, CliResult};
use crate::util::{atomic_write, emit_report, ResetArg};

#[derive(Debug, Args)]
pub struct AdapterArgs {
    /// Training samples per class; 0 skips training.
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Residual ratio of the adapter branch.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Hidden width [default: C/4].
    #[arg(long)]
    pub bottleneck: Option<usize>,
    #[arg(long)]
    pub leak: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub surrogate_width: Option<f64>,
    /// soft or hard.
    #[arg(long)]
    pub reset: Option<ResetArg>,
    /// Treat the reset as a constant during backpropagation.
    #[arg(long)]
    pub detach_reset: Option<bool>,
    /// Multiplier on the down-projection init bound [default: sqrt(C)].
    #[arg(long)]
    pub down_init_gain: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdapterEcho {
    pub shots: usize,
    pub epochs: usize,
    pub lr: f64,
    pub patience: usize,
    pub seed: u64,
    pub beta: f64,
    pub bottleneck: usize,
    pub leak: f64,
    pub threshold: f64,
    pub surrogate_width: f64,
    pub reset: ResetArg,
    pub detach_reset: bool,
    pub down_init_gain: f64,
}

impl AdapterEcho {
    pub fn resolve(
        args: &AdapterArgs,
        file: &ConfigFile,
        dim: usize,
        default_shots: usize,
    ) -> CliResult<Self> {
        let d = TrainConfig::new(0, 1);
        let lif = LifParams::default();
        let reset = match lif.reset {
            spikeshot_core::Reset::Soft => ResetArg::Soft,
            spikeshot_core::Reset::Hard => ResetArg::Hard,
        };
        Ok(AdapterEcho {
            shots: file.pick(args.shots, "shots", default_shots)?,
            epochs: file.pick(args.epochs, "epochs", d.epochs)?,
            lr: file.pick(args.lr, "lr", d.learning_rate)?,
            patience: file.pick(args.patience, "patience", d.patience)?,
            seed: file.pick(args.seed, "seed", d.seed)?,
            beta: file.pick(args.beta, "beta", d.residual_ratio)?,
            bottleneck: file.pick(args.bottleneck, "bottleneck", (dim / 4).max(1))?,
            leak: file.pick(args.leak, "leak", lif.leak)?,
            threshold: file.pick(args.threshold, "threshold", lif.threshold)?,
            surrogate_width: file.pick(
                args.surrogate_width,
                "surrogate_width",
                lif.surrogate_width,
            )?,
            reset: file.pick(args.reset, "reset", reset)?,
            detach_reset: file.pick(args.detach_reset, "detach_reset", d.detach_reset)?,
            down_init_gain: file.pick(
                args.down_init_gain,
                "down_init_gain",
                (dim as f64).sqrt(),
            )?,
        })
    }

    fn lif(&self) -> LifParams {
        LifParams {
            leak: self.leak,
            threshold: self.threshold,
            surrogate_width: self.surrogate_width,
            reset: self.reset.into(),
        }
    }

    fn train_config(&self, fusion: &FusionConfig) -> TrainConfig {
        TrainConfig {
            shots: self.shots,
            epochs: self.epochs,
            learning_rate: self.lr,
            patience: self.patience,
            seed: self.seed,
            bottleneck: Some(self.bottleneck),
            residual_ratio: self.beta,
            lif: self.lif(),
            detach_reset: self.detach_reset,
            down_init_gain: Some(self.down_init_gain),
            fusion: fusion.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Training {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub shot_ids: Vec<String>,
    pub history: Vec<EpochRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

impl From<&EpochLog> for EpochRow {
    fn from(l: &EpochLog) -> Self {
        EpochRow {
            epoch: l.epoch,
            loss: l.loss,
            train_accuracy: l.train_accuracy,
            val_accuracy: l.val_accuracy,
            val_loss: l.val_loss,
        }
    }
}

pub struct FewShotRun {
    pub checkpoint: Vec<u8>,
    pub before: Metrics,
    pub after: Metrics,
    pub after_predictions: Vec<(usize, Prediction)>,
    pub baseline: Metrics,
    pub baseline_equals_zero_shot: bool,
    pub training: Option<Training>,
}

fn same_predictions(a: &[(usize, Prediction)], b: &[(usize, Prediction)]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|((i, p), (j, q))| {
            i == j && p.argmax == q.argmax && p.probabilities == q.probabilities
        })
}

/// Zero-shot, trained adapter and the beta = 0 sanity baseline on one split.
pub fn run_fewshot(
    set: &EmbeddingSet,
    split: Split,
    workers: usize,
    fusion: &FusionConfig,
    adapter: &AdapterEcho,
) -> CliResult<FewShotRun> {
    let zero = classify::zero_shot(set, split, workers, fusion)?;
    let before = classify::metrics(set, split, &zero)?;

    let (trained, training) = if adapter.shots == 0 {
        info!("shots = 0, writing an identity adapter without training");
        let p = AdapterParams::zeros(set.dim(), adapter.bottleneck, 0.0, adapter.lif());
        p.validate()?;
        (p, None)
    } else {
        let outcome = train_few_shot(set, &adapter.train_config(fusion))?;
        let training = Training {
            best_epoch: outcome.best_epoch,
            epochs_run: outcome.history.len().saturating_sub(1),
            shot_ids: outcome.shot_ids.clone(),
            history: outcome.history.iter().map(EpochRow::from).collect(),
        };
        (outcome.params, Some(training))
    };
    // Evaluate what is stored, so `eval --checkpoint` reproduces these numbers.
    let checkpoint = write_checkpoint(&trained);
    let params = read_checkpoint(&checkpoint).map_err(|e| CliError::input(e.to_string()))?;
    let after_predictions = classify::with_adapter(set, split, workers, fusion, &params)?;
    let after = classify::metrics(set, split, &after_predictions)?;

    let mut identity = params.clone();
    identity.residual_ratio = 0.0;
    let base = classify::with_adapter(set, split, workers, fusion, &identity)?;
    let baseline = classify::metrics(set, split, &base)?;
    Ok(FewShotRun {
        checkpoint,
        before,
        after,
        after_predictions,
        baseline,
        baseline_equals_zero_shot: same_predictions(&base, &zero),
        training,
    })
}

#[derive(Debug, Args)]
pub struct FewshotArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[command(flatten)]
    pub adapter: AdapterArgs,
    /// NCAD checkpoint path [default: <manifest dir>/adapter.ncad].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Report path [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-sample adapter predictions as JSON lines.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub probabilities: bool,
}

#[derive(Serialize)]
struct Config<'a> {
    #[serde(flatten)]
    data: &'a DataConfig,
    #[serde(flatten)]
    fusion: &'a FusionEcho,
    #[serde(flatten)]
    adapter: &'a AdapterEcho,
    checkpoint: String,
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'static str,
    config: Config<'a>,
    dataset: &'a str,
    timesteps: usize,
    before: Metrics,
    after: Metrics,
    /// The trained adapter with beta forced to 0; must match `before`.
    baseline_beta0: Metrics,
    baseline_equals_zero_shot: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    training: Option<Training>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    alpha_search: Vec<GridPoint>,
}

pub fn run(args: &FewshotArgs) -> CliResult<()> {
    let file = ConfigFile::load(args.data.config.as_deref())?;
    let loaded = classify::load(&args.data, &file)?;
    let set = &loaded.set;
    let workers = loaded.config.workers;
    let (fusion, echo, search) = classify::resolve_fusion(&args.fusion, &file, set, workers)?;
    let adapter = AdapterEcho::resolve(&args.adapter, &file, set.dim(), 16)?;
    let checkpoint = match file.pick_opt(args.checkpoint.clone(), "checkpoint")? {
        Some(p) => p,
        None => args
            .data
            .manifest
            .parent()
            .unwrap_or(std::path::Path::new("."))
            .join("adapter.ncad"),
    };

    let result = run_fewshot(set, loaded.split, workers, &fusion, &adapter)?;
    atomic_write(&checkpoint, &result.checkpoint)?;
    if let Some(path) = &args.predictions {
        classify::write_predictions(path, set, &result.after_predictions, args.probabilities)?;
    }
    eprintln!(
        "{}-shot on {}: zero-shot {:.4} -> adapter {:.4} (beta=0 baseline {:.4}); checkpoint {}",
        adapter.shots,
        classify::split_name(loaded.split),
        result.before.accuracy,
        result.after.accuracy,
        result.baseline.accuracy,
        checkpoint.display()
    );
    if !result.baseline_equals_zero_shot {
        log::warn!("beta = 0 adapter predictions differ from zero-shot predictions");
    }
    let report = Report {
        command: "fewshot",
        config: Config {
            data: &loaded.config,
            fusion: &echo,
            adapter: &adapter,
            checkpoint: checkpoint.display().to_string(),
        },
        dataset: &set.manifest.dataset,
        timesteps: set.manifest.timesteps,
        before: result.before,
        after: result.after,
        baseline_beta0: result.baseline,
        baseline_equals_zero_shot: result.baseline_equals_zero_shot,
        training: result.training,
        alpha_search: search,
    };
    emit_report(&report, args.out.as_deref())
}
