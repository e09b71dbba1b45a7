//! Zero-shot scoring of visual features against text-class embeddings.
//!
//! Single frame: `p = softmax(s * W f)`. Several timesteps:
//! `p = softmax(s * sum_i alpha_i * W f_i)`, where `W` is the `K x C` text
//! matrix, `s` the logit scale and `alpha_i` per-timestep weights.

use thiserror::Error;

use crate::gateway::EmbeddingMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("all timestep weights are zero")]
    AllZeroWeights,
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("cannot evaluate an empty prediction set")]
    EmptyEvaluation,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("visual row {0} has zero norm")]
    ZeroRow(usize),
}

pub const DEFAULT_LOGIT_SCALE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub alphas: Vec<f64>,
    pub logit_scale: f64,
    /// Rescale each visual row to unit length before scoring. The loader
    /// already normalizes on read; this matters for adapter outputs.
    pub normalize: bool,
}

impl FusionConfig {
    pub fn uniform(timesteps: usize) -> Self {
        FusionConfig {
            alphas: vec![1.0 / timesteps as f64; timesteps],
            logit_scale: DEFAULT_LOGIT_SCALE,
            normalize: false,
        }
    }

    pub fn with_alphas(alphas: Vec<f64>) -> Self {
        FusionConfig {
            alphas,
            logit_scale: DEFAULT_LOGIT_SCALE,
            normalize: false,
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.logit_scale.is_finite() && self.logit_scale > 0.0) {
            return Err(FusionError::InvalidConfig(format!(
                "logit scale must be positive, got {}",
                self.logit_scale
            )));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(FusionError::InvalidConfig(format!(
                "timestep weights must be finite and non-negative, got {a}"
            )));
        }
        if self.alphas.iter().all(|&a| a == 0.0) {
            return Err(FusionError::AllZeroWeights);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub argmax: usize,
    /// `T x K`: `scale * alpha_i * W f_i` for each timestep, for diagnostics.
    pub contributions: Vec<Vec<f64>>,
}

impl Prediction {
    fn from_logits(logits: &[f64], contributions: Vec<Vec<f64>>) -> Self {
        let probabilities = softmax(logits);
        Prediction {
            argmax: argmax(&probabilities),
            probabilities,
            contributions,
        }
    }

    /// Classes ordered by decreasing probability, at most `n`.
    pub fn top_k(&self, n: usize) -> Vec<(usize, f64)> {
        let mut idx: Vec<usize> = (0..self.probabilities.len()).collect();
        idx.sort_by(|&a, &b| {
            self.probabilities[b]
                .total_cmp(&self.probabilities[a])
                .then(a.cmp(&b))
        });
        idx.into_iter()
            .take(n)
            .map(|i| (i, self.probabilities[i]))
            .collect()
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// First index of the largest value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `W f` for every class row, accumulated in `f64`.
pub fn class_scores(text: &EmbeddingMatrix, feature: &[f64]) -> Vec<f64> {
    text.iter_rows()
        .map(|w| w.iter().zip(feature).map(|(&a, &b)| a as f64 * b).sum())
        .collect()
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

pub(crate) fn unit(v: &[f64], row: usize) -> Result<Vec<f64>, FusionError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(FusionError::ZeroRow(row));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

fn check_dims(text: &EmbeddingMatrix, cols: usize) -> Result<(), FusionError> {
    if text.cols() != cols {
        return Err(FusionError::DimensionMismatch(format!(
            "text embeddings have C={}, visual features have C={cols}",
            text.cols()
        )));
    }
    Ok(())
}

/// Single-frame classification.
pub fn classify_single(
    text: &EmbeddingMatrix,
    feature: &[f32],
    logit_scale: f64,
) -> Result<Prediction, FusionError> {
    check_dims(text, feature.len())?;
    let logits: Vec<f64> = class_scores(text, &widen(feature))
        .into_iter()
        .map(|z| logit_scale * z)
        .collect();
    Ok(Prediction::from_logits(&logits, Vec::new()))
}

/// Weighted multi-timestep classification over the rows of `features`.
pub fn classify_fused(
    text: &EmbeddingMatrix,
    features: &EmbeddingMatrix,
    cfg: &FusionConfig,
) -> Result<Prediction, FusionError> {
    let rows: Vec<Vec<f64>> = features.iter_rows().map(widen).collect();
    classify_fused_rows(text, &rows, cfg)
}

/// [`classify_fused`] over `f64` rows (adapter outputs).
pub fn classify_fused_rows(
    text: &EmbeddingMatrix,
    rows: &[Vec<f64>],
    cfg: &FusionConfig,
) -> Result<Prediction, FusionError> {
    cfg.validate()?;
    if rows.len() != cfg.alphas.len() {
        return Err(FusionError::DimensionMismatch(format!(
            "{} timesteps but {} weights",
            rows.len(),
            cfg.alphas.len()
        )));
    }
    let k = text.rows();
    let mut total = vec![0.0; k];
    let mut contributions = Vec::with_capacity(rows.len());
    for (i, (row, &alpha)) in rows.iter().zip(&cfg.alphas).enumerate() {
        check_dims(text, row.len())?;
        let scores = if cfg.normalize {
            class_scores(text, &unit(row, i)?)
        } else {
            class_scores(text, row)
        };
        for (acc, z) in total.iter_mut().zip(&scores) {
            *acc += alpha * z;
        }
        contributions.push(scores.iter().map(|z| cfg.logit_scale * alpha * z).collect());
    }
    let logits: Vec<f64> = total.into_iter().map(|z| cfg.logit_scale * z).collect();
    Ok(Prediction::from_logits(&logits, contributions))
}

/// The same fused logits computed as `W (sum_i alpha_i f_i)`: pool first,
/// project once. Agrees with the per-timestep order up to rounding.
pub fn fused_logits_pooled(
    text: &EmbeddingMatrix,
    features: &EmbeddingMatrix,
    cfg: &FusionConfig,
) -> Result<Vec<f64>, FusionError> {
    cfg.validate()?;
    if features.rows() != cfg.alphas.len() {
        return Err(FusionError::DimensionMismatch(format!(
            "{} timesteps but {} weights",
            features.rows(),
            cfg.alphas.len()
        )));
    }
    check_dims(text, features.cols())?;
    let mut pooled = vec![0.0; features.cols()];
    for (i, (row, &alpha)) in features.iter_rows().zip(&cfg.alphas).enumerate() {
        let row = if cfg.normalize {
            unit(&widen(row), i)?
        } else {
            widen(row)
        };
        for (p, x) in pooled.iter_mut().zip(row) {
            *p += alpha * x;
        }
    }
    Ok(class_scores(text, &pooled)
        .into_iter()
        .map(|z| cfg.logit_scale * z)
        .collect())
}

/// Points of the simplex `{alpha : alpha_i >= 0, sum alpha_i = 1}` on a grid
/// of `1/steps`, in lexicographic order.
pub fn simplex_grid(timesteps: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(
        left: usize,
        slots: usize,
        steps: usize,
        prefix: &mut Vec<usize>,
        out: &mut Vec<Vec<f64>>,
    ) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.iter().map(|&n| n as f64 / steps as f64).collect());
            prefix.pop();
            return;
        }
        for n in 0..=left {
            prefix.push(n);
            rec(left - n, slots - 1, steps, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if timesteps > 0 && steps > 0 {
        rec(steps, timesteps, steps, &mut Vec::new(), &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// `None` for classes with no samples.
    pub per_class_accuracy: Vec<Option<f64>>,
}

/// Accuracy and confusion counts of predicted class indices.
pub fn evaluate(
    predicted: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<Evaluation, FusionError> {
    if predicted.len() != labels.len() {
        return Err(FusionError::LengthMismatch {
            predictions: predicted.len(),
            labels: labels.len(),
        });
    }
    if predicted.is_empty() {
        return Err(FusionError::EmptyEvaluation);
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &l) in predicted.iter().zip(labels) {
        for v in [p, l] {
            if v >= num_classes {
                return Err(FusionError::LabelOutOfRange {
                    label: v,
                    classes: num_classes,
                });
            }
        }
        confusion[l][p] += 1;
    }
    let correct = (0..num_classes).map(|k| confusion[k][k]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[k] as f64 / n as f64)
        })
        .collect();
    Ok(Evaluation {
        correct,
        total: labels.len(),
        accuracy: correct as f64 / labels.len() as f64,
        confusion,
        per_class_accuracy,
    })
}
