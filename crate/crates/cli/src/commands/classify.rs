//! Loading, fusion settings and prediction shared by the classifying commands.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use spikeshot_core::adapter::predict_with_adapter;
use spikeshot_core::fusion::{
    classify_fused, evaluate, simplex_grid, Evaluation, DEFAULT_LOGIT_SCALE,
};
use spikeshot_core::gateway::load_embedding_set;
use spikeshot_core::{
    AdapterParams, EmbeddingSet, FusionConfig, GatewayError, Manifest, Prediction, Split,
};

use crate::config::ConfigFile;
use crate::error::{CliError, CliResult};
use crate::util::{
    atomic_write, missing_embeddings, missing_embeddings_error, with_workers, SplitArg,
};

/// Grid resolution for the alpha search: steps of 1/4 on the simplex.
pub const GRID_STEPS: usize = 4;
pub const GRID_MAX_TIMESTEPS: usize = 4;
const TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSpec {
    Uniform,
    Grid,
    List(Vec<f64>),
}

impl FromStr for AlphaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "uniform" => Ok(AlphaSpec::Uniform),
            "grid" => Ok(AlphaSpec::Grid),
            list => list
                .split(',')
                .map(|a| {
                    a.trim()
                        .parse::<f64>()
                        .map_err(|e| format!("bad weight {a:?}: {e}"))
                })
                .collect::<Result<Vec<_>, _>>()
                .map(AlphaSpec::List),
        }
    }
}

impl fmt::Display for AlphaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaSpec::Uniform => f.write_str("uniform"),
            AlphaSpec::Grid => f.write_str("grid"),
            AlphaSpec::List(v) => {
                let parts: Vec<String> = v.iter().map(|a| a.to_string()).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

/// Where the embeddings come from and which samples to score.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// manifest.json written by `project` (or `synth`).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding text.ncem and <id>.ncem [default: <manifest dir>/embeddings].
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// L2-normalize every embedding row on load [default: true].
    #[arg(long)]
    pub normalize: Option<bool>,
    /// Split to report on [default: test].
    #[arg(long)]
    pub split: Option<SplitArg>,
    /// Worker threads, 0 = one per core.
    #[arg(long)]
    pub workers: Option<usize>,
    /// key = value file with defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FusionArgs {
    /// uniform, grid, or a comma-separated list with one weight per timestep.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<AlphaSpec>,
    #[arg(long)]
    pub logit_scale: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DataConfig {
    pub manifest: String,
    pub embeddings: String,
    pub normalize: bool,
    pub split: SplitArg,
    pub workers: usize,
}

pub struct Loaded {
    pub set: EmbeddingSet,
    pub config: DataConfig,
    pub split: Split,
}

pub fn embeddings_dir(manifest: &Path, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| {
        manifest
            .parent()
            .unwrap_or(Path::new("."))
            .join("embeddings")
    })
}

pub fn load_manifest(path: &Path) -> CliResult<Manifest> {
    Manifest::load(path).map_err(|e| match e {
        GatewayError::MissingArtifact(p) => CliError::missing(format!(
            "manifest {} not found; create it with `spikeshot project`",
            p.display()
        )),
        other => other.into(),
    })
}

pub fn load(args: &DataArgs, file: &ConfigFile) -> CliResult<Loaded> {
    let embeddings = match file.pick_opt(args.embeddings.clone(), "embeddings")? {
        Some(p) => p,
        None => embeddings_dir(&args.manifest, None),
    };
    let config = DataConfig {
        manifest: args.manifest.display().to_string(),
        embeddings: embeddings.display().to_string(),
        normalize: file.pick(args.normalize, "normalize", true)?,
        split: file.pick(args.split, "split", SplitArg::Test)?,
        workers: file.pick(args.workers, "workers", 0usize)?,
    };
    let manifest = load_manifest(&args.manifest)?;
    let missing = missing_embeddings(&manifest, &embeddings);
    if !missing.is_empty() {
        return Err(missing_embeddings_error(
            &manifest,
            &args.manifest,
            &embeddings,
            &missing,
        ));
    }
    let set = load_embedding_set(&manifest, &embeddings, config.normalize)?;
    Ok(Loaded {
        set,
        split: config.split.into(),
        config,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FusionEcho {
    /// The requested specification.
    pub alpha: String,
    /// The weights actually used; pass them back via `--alpha` to re-run.
    pub alphas: Vec<f64>,
    pub logit_scale: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub alphas: Vec<f64>,
    pub accuracy: f64,
}

/// Turns the alpha specification into concrete weights. A grid search picks
/// the point with the best zero-shot accuracy on the training split; ties go
/// to the earlier point in lexicographic order.
pub fn resolve_fusion(
    fusion: &FusionArgs,
    file: &ConfigFile,
    set: &EmbeddingSet,
    workers: usize,
) -> CliResult<(FusionConfig, FusionEcho, Vec<GridPoint>)> {
    let spec = file.pick(fusion.alpha.clone(), "alpha", AlphaSpec::Uniform)?;
    let logit_scale = file.pick(fusion.logit_scale, "logit_scale", DEFAULT_LOGIT_SCALE)?;
    let t = set.manifest.timesteps;
    let mut search = Vec::new();
    let alphas = match &spec {
        AlphaSpec::Uniform => FusionConfig::uniform(t).alphas,
        AlphaSpec::List(v) => {
            if v.len() != t {
                return Err(CliError::config(format!(
                    "--alpha has {} weights but T = {t}",
                    v.len()
                )));
            }
            v.clone()
        }
        AlphaSpec::Grid => {
            if t > GRID_MAX_TIMESTEPS {
                return Err(CliError::config(format!(
                    "alpha grid search supports T <= {GRID_MAX_TIMESTEPS}, the manifest has T = {t}"
                )));
            }
            if set.split(Split::Train).next().is_none() {
                return Err(CliError::config(
                    "alpha grid search needs training-split samples",
                ));
            }
            let mut best: Option<GridPoint> = None;
            for alphas in simplex_grid(t, GRID_STEPS) {
                let cfg = FusionConfig {
                    alphas: alphas.clone(),
                    logit_scale,
                    normalize: false,
                };
                let preds = predict(set, Split::Train, workers, |s| {
                    Ok(classify_fused(&set.text, s, &cfg)?)
                })?;
                let eval = evaluation(set, Split::Train, &preds)?;
                let point = GridPoint {
                    alphas,
                    accuracy: eval.accuracy,
                };
                if best.as_ref().is_none_or(|b| point.accuracy > b.accuracy) {
                    best = Some(point.clone());
                }
                search.push(point);
            }
            best.expect("grid is non-empty").alphas
        }
    };
    let cfg = FusionConfig {
        alphas: alphas.clone(),
        logit_scale,
        normalize: false,
    };
    cfg.validate()?;
    let echo = FusionEcho {
        alpha: spec.to_string(),
        alphas,
        logit_scale,
    };
    Ok((cfg, echo, search))
}

/// Runs `f` on every sample of `split` in parallel, preserving manifest order.
pub fn predict<F>(
    set: &EmbeddingSet,
    split: Split,
    workers: usize,
    f: F,
) -> CliResult<Vec<(usize, Prediction)>>
where
    F: Fn(&spikeshot_core::EmbeddingMatrix) -> CliResult<Prediction> + Sync,
{
    let idx: Vec<usize> = (0..set.samples.len())
        .filter(|&i| set.samples[i].split == split)
        .collect();
    with_workers(workers, || {
        idx.par_iter()
            .map(|&i| f(&set.samples[i].features).map(|p| (i, p)))
            .collect::<CliResult<Vec<_>>>()
    })?
}

pub fn zero_shot(
    set: &EmbeddingSet,
    split: Split,
    workers: usize,
    cfg: &FusionConfig,
) -> CliResult<Vec<(usize, Prediction)>> {
    predict(set, split, workers, |f| {
        Ok(classify_fused(&set.text, f, cfg)?)
    })
}

pub fn with_adapter(
    set: &EmbeddingSet,
    split: Split,
    workers: usize,
    cfg: &FusionConfig,
    params: &AdapterParams,
) -> CliResult<Vec<(usize, Prediction)>> {
    predict(set, split, workers, |f| {
        Ok(predict_with_adapter(&set.text, f, params, cfg)?)
    })
}

pub fn evaluation(
    set: &EmbeddingSet,
    split: Split,
    preds: &[(usize, Prediction)],
) -> CliResult<Evaluation> {
    if preds.is_empty() {
        return Err(CliError::input(format!(
            "the {} split has no samples",
            split_name(split)
        )));
    }
    let predicted: Vec<usize> = preds.iter().map(|(_, p)| p.argmax).collect();
    let labels: Vec<usize> = preds.iter().map(|(i, _)| set.samples[*i].label).collect();
    Ok(evaluate(&predicted, &labels, set.num_classes())?)
}

pub fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "test",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassAccuracy {
    pub class: String,
    pub samples: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub per_class: Vec<ClassAccuracy>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
}

impl Metrics {
    pub fn new(eval: Evaluation, classes: &[String]) -> Self {
        let per_class = classes
            .iter()
            .zip(&eval.per_class_accuracy)
            .zip(&eval.confusion)
            .map(|((class, &accuracy), row)| ClassAccuracy {
                class: class.clone(),
                samples: row.iter().sum(),
                accuracy,
            })
            .collect();
        Metrics {
            accuracy: eval.accuracy,
            correct: eval.correct,
            total: eval.total,
            per_class,
            confusion: eval.confusion,
        }
    }
}

pub fn metrics(
    set: &EmbeddingSet,
    split: Split,
    preds: &[(usize, Prediction)],
) -> CliResult<Metrics> {
    Ok(Metrics::new(
        evaluation(set, split, preds)?,
        &set.manifest.classes,
    ))
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    id: &'a str,
    label: usize,
    argmax: usize,
    top5: Vec<(usize, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probabilities: Option<&'a [f64]>,
}

/// One JSON object per sample: id, label, argmax, top-5 and optionally all probabilities.
pub fn write_predictions(
    path: &Path,
    set: &EmbeddingSet,
    preds: &[(usize, Prediction)],
    probabilities: bool,
) -> CliResult<()> {
    let mut out = String::new();
    for (i, p) in preds {
        let line = PredictionLine {
            id: &set.samples[*i].id,
            label: set.samples[*i].label,
            argmax: p.argmax,
            top5: p.top_k(TOP_K),
            probabilities: probabilities.then_some(p.probabilities.as_slice()),
        };
        out.push_str(&serde_json::to_string(&line).expect("prediction serializes"));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_spec_round_trip() {
        assert_eq!("uniform".parse::<AlphaSpec>().unwrap(), AlphaSpec::Uniform);
        assert_eq!("grid".parse::<AlphaSpec>().unwrap(), AlphaSpec::Grid);
        let list: AlphaSpec = "0.25, 0.75".parse().unwrap();
        assert_eq!(list, AlphaSpec::List(vec![0.25, 0.75]));
        assert_eq!(list.to_string().parse::<AlphaSpec>().unwrap(), list);
        assert!("a,b".parse::<AlphaSpec>().is_err());
    }
}
