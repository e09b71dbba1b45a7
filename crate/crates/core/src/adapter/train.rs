//! Few-shot training of the adapter against frozen text and visual embeddings.

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    backward, forward_recorded, AdapterError, AdapterGrads, AdapterParams, BackwardOptions,
    LifParams, SpikeMode,
};
use crate::fusion::{class_scores, classify_fused_rows, softmax, unit, FusionConfig, Prediction};
use crate::gateway::{EmbeddingMatrix, EmbeddingSet, Sample, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub shots: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Stop after this many epochs without validation improvement.
    pub patience: usize,
    pub seed: u64,
    /// Hidden width; `None` means `max(C / 4, 1)`.
    pub bottleneck: Option<usize>,
    pub residual_ratio: f64,
    pub lif: LifParams,
    pub detach_reset: bool,
    /// Multiplier on the `W_down` init bound; `None` means `sqrt(C)`, which
    /// gives unit-norm inputs currents of order one whatever `C` is.
    pub down_init_gain: Option<f64>,
    pub fusion: FusionConfig,
}

impl TrainConfig {
    pub fn new(shots: usize, timesteps: usize) -> Self {
        TrainConfig {
            shots,
            epochs: 200,
            learning_rate: 1e-2,
            patience: 20,
            seed: 0,
            bottleneck: None,
            residual_ratio: 0.2,
            lif: LifParams::default(),
            detach_reset: false,
            down_init_gain: None,
            fusion: FusionConfig::uniform(timesteps),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters with the best validation score seen (the initialization counts).
    pub params: AdapterParams,
    pub best_epoch: usize,
    /// Epoch 0 is the initialization.
    pub history: Vec<EpochLog>,
    /// Ids of the sampled training shots.
    pub shot_ids: Vec<String>,
}

/// Plain Adam over the four parameter blocks.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64, params: &AdapterParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.blocks().iter().map(|b| vec![0.0; b.len()]).collect();
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut AdapterParams, grads: &AdapterGrads) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (b, (p, g)) in params
            .blocks_mut()
            .into_iter()
            .zip(grads.blocks())
            .enumerate()
        {
            for j in 0..p.len() {
                self.m[b][j] = self.beta1 * self.m[b][j] + (1.0 - self.beta1) * g[j];
                self.v[b][j] = self.beta2 * self.v[b][j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = self.m[b][j] / c1;
                let v_hat = self.v[b][j] / c2;
                p[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Indices into `set.samples` of `shots` training samples per class, drawn
/// with a seeded RNG. Classes are visited in index order.
pub fn fewshot_indices(
    set: &EmbeddingSet,
    shots: usize,
    seed: u64,
) -> Result<Vec<usize>, AdapterError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(shots * set.num_classes());
    for class in 0..set.num_classes() {
        let mut pool: Vec<usize> = set
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split == Split::Train && s.label == class)
            .map(|(i, _)| i)
            .collect();
        if pool.len() < shots {
            return Err(AdapterError::InsufficientSamples {
                class,
                available: pool.len(),
                needed: shots,
            });
        }
        pool.shuffle(&mut rng);
        pool.truncate(shots);
        pool.sort_unstable();
        chosen.extend(pool);
    }
    Ok(chosen)
}

fn widen(m: &EmbeddingMatrix) -> Vec<Vec<f64>> {
    m.iter_rows()
        .map(|r| r.iter().map(|&x| x as f64).collect())
        .collect()
}

/// Classifies one sample with the adapter in front of the fusion step.
pub fn predict_with_adapter(
    text: &EmbeddingMatrix,
    features: &EmbeddingMatrix,
    params: &AdapterParams,
    fusion: &FusionConfig,
) -> Result<Prediction, AdapterError> {
    let (adapted, _) = forward_recorded(&widen(features), params, SpikeMode::Hard)?;
    Ok(classify_fused_rows(text, &adapted, fusion)?)
}

/// Cross-entropy of one sample and, when `grads` is given, its gradient
/// (scaled by `weight`) accumulated into `grads`.
fn sample_loss(
    text: &EmbeddingMatrix,
    rows: &[Vec<f64>],
    label: usize,
    params: &AdapterParams,
    cfg: &TrainConfig,
    mode: SpikeMode,
    grads: Option<(&mut AdapterGrads, f64)>,
) -> Result<(f64, bool), AdapterError> {
    let fusion = &cfg.fusion;
    let (adapted, record) = forward_recorded(rows, params, mode)?;
    let k = text.rows();
    let c = text.cols();
    let mut logits = vec![0.0; k];
    let mut units = Vec::with_capacity(adapted.len());
    for (i, (row, &alpha)) in adapted.iter().zip(&fusion.alphas).enumerate() {
        let n = if fusion.normalize {
            unit(row, i)?
        } else {
            row.clone()
        };
        for (z, s) in logits.iter_mut().zip(class_scores(text, &n)) {
            *z += alpha * s;
        }
        units.push(n);
    }
    logits.iter_mut().for_each(|z| *z *= fusion.logit_scale);
    let p = softmax(&logits);
    let loss = -p[label].max(f64::MIN_POSITIVE).ln();
    let correct = crate::fusion::argmax(&p) == label;

    if let Some((acc, weight)) = grads {
        let dz: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(j, &pj)| weight * (pj - if j == label { 1.0 } else { 0.0 }))
            .collect();
        // dL/dn_i = scale * alpha_i * W^T dz
        let mut wt_dz = vec![0.0; c];
        for (j, w) in text.iter_rows().enumerate() {
            for (acc_c, &wc) in wt_dz.iter_mut().zip(w) {
                *acc_c += wc as f64 * dz[j];
            }
        }
        let upstream: Vec<Vec<f64>> = adapted
            .iter()
            .zip(&units)
            .zip(&fusion.alphas)
            .map(|((raw, n), &alpha)| {
                let dn: Vec<f64> = wt_dz
                    .iter()
                    .map(|g| fusion.logit_scale * alpha * g)
                    .collect();
                if fusion.normalize {
                    // d(x/|x|) = (I - n n^T) / |x|
                    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let proj: f64 = n.iter().zip(&dn).map(|(a, b)| a * b).sum();
                    dn.iter()
                        .zip(n)
                        .map(|(g, ni)| (g - ni * proj) / norm)
                        .collect()
                } else {
                    dn
                }
            })
            .collect();
        let g = backward(
            params,
            &record,
            &upstream,
            BackwardOptions {
                detach_reset: cfg.detach_reset,
            },
        )?;
        acc.accumulate(&g);
    }
    Ok((loss, correct))
}

/// Cross-entropy of the fused prediction for one sample and its gradient
/// with respect to the adapter parameters.
pub fn cross_entropy_grad(
    text: &EmbeddingMatrix,
    rows: &[Vec<f64>],
    label: usize,
    params: &AdapterParams,
    cfg: &TrainConfig,
    mode: SpikeMode,
) -> Result<(f64, AdapterGrads), AdapterError> {
    let mut grads = AdapterGrads::zeros_like(params);
    let (loss, _) = sample_loss(
        text,
        rows,
        label,
        params,
        cfg,
        mode,
        Some((&mut grads, 1.0)),
    )?;
    Ok((loss, grads))
}

fn score(
    text: &EmbeddingMatrix,
    samples: &[(&Sample, Vec<Vec<f64>>)],
    params: &AdapterParams,
    cfg: &TrainConfig,
) -> Result<(f64, f64), AdapterError> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (s, rows) in samples {
        let (l, ok) = sample_loss(text, rows, s.label, params, cfg, SpikeMode::Hard, None)?;
        loss += l;
        correct += ok as usize;
    }
    let n = samples.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains the adapter on `cfg.shots` samples per class from the training split.
///
/// The text and visual embeddings stay fixed. Validation uses the remaining
/// training-split samples (or the shots themselves when none remain); the best
/// validation accuracy, ties broken by lower validation loss, wins.
pub fn train_few_shot(set: &EmbeddingSet, cfg: &TrainConfig) -> Result<TrainOutcome, AdapterError> {
    let timesteps = set.manifest.timesteps;
    if cfg.fusion.alphas.len() != timesteps {
        return Err(AdapterError::DimensionMismatch(format!(
            "{} fusion weights for {timesteps} timesteps",
            cfg.fusion.alphas.len()
        )));
    }
    cfg.fusion.validate()?;
    let c = set.dim();
    let shot_idx = fewshot_indices(set, cfg.shots, cfg.seed)?;
    let hidden = cfg.bottleneck.unwrap_or((c / 4).max(1));
    let gain = cfg.down_init_gain.unwrap_or((c as f64).sqrt());
    // Weight init draws from its own stream so that changing `shots` does not
    // change the initialization.
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ada9);
    let mut params =
        AdapterParams::init_scaled(c, hidden, cfg.residual_ratio, cfg.lif, gain, &mut init_rng);
    params.validate()?;

    let train: Vec<(&Sample, Vec<Vec<f64>>)> = shot_idx
        .iter()
        .map(|&i| (&set.samples[i], widen(&set.samples[i].features)))
        .collect();
    let mut val: Vec<(&Sample, Vec<Vec<f64>>)> = set
        .samples
        .iter()
        .enumerate()
        .filter(|(i, s)| s.split == Split::Train && shot_idx.binary_search(i).is_err())
        .map(|(_, s)| (s, widen(&s.features)))
        .collect();
    if val.is_empty() {
        val = train.clone();
    }

    let text = &set.text;
    let (loss0, acc0) = score(text, &train, &params, cfg)?;
    let (val_loss0, val_acc0) = score(text, &val, &params, cfg)?;
    let mut history = vec![EpochLog {
        epoch: 0,
        loss: loss0,
        train_accuracy: acc0,
        val_accuracy: val_acc0,
        val_loss: val_loss0,
    }];
    let mut best = (params.clone(), 0usize, val_acc0, val_loss0);
    let mut stale = 0usize;
    let mut adam = Adam::new(cfg.learning_rate, &params);
    let weight = 1.0 / train.len().max(1) as f64;
    let mut last_loss = loss0;

    for epoch in 1..=cfg.epochs {
        if train.is_empty() {
            break;
        }
        let mut grads = AdapterGrads::zeros_like(&params);
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (s, rows) in &train {
            let (l, ok) = sample_loss(
                text,
                rows,
                s.label,
                &params,
                cfg,
                SpikeMode::Hard,
                Some((&mut grads, weight)),
            )?;
            loss += l * weight;
            correct += ok as usize;
        }
        if !loss.is_finite() {
            return Err(AdapterError::NonFiniteLoss { epoch, last_loss });
        }
        last_loss = loss;
        adam.step(&mut params, &grads);

        let (val_loss, val_acc) = score(text, &val, &params, cfg)?;
        let log = EpochLog {
            epoch,
            loss,
            train_accuracy: correct as f64 / train.len() as f64,
            val_accuracy: val_acc,
            val_loss,
        };
        debug!(
            "epoch {epoch}: loss {loss:.5} train_acc {:.4} val_acc {val_acc:.4} val_loss {val_loss:.5}",
            log.train_accuracy
        );
        history.push(log);

        if val_acc > best.2 || (val_acc == best.2 && val_loss < best.3) {
            best = (params.clone(), epoch, val_acc, val_loss);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                debug!("no validation improvement for {stale} epochs, stopping");
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best.0,
        best_epoch: best.1,
        history,
        shot_ids: shot_idx
            .iter()
            .map(|&i| set.samples[i].id.clone())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticSpec};

    fn small_set() -> EmbeddingSet {
        generate(&SyntheticSpec {
            train_per_class: 6,
            test_per_class: 4,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn insufficient_samples() {
        let set = small_set();
        let err = train_few_shot(&set, &TrainConfig::new(7, 2)).unwrap_err();
        assert_eq!(
            err,
            AdapterError::InsufficientSamples {
                class: 0,
                available: 6,
                needed: 7
            }
        );
    }

    #[test]
    fn zero_epochs_returns_init() {
        let set = small_set();
        let mut cfg = TrainConfig::new(2, 2);
        cfg.epochs = 0;
        let out = train_few_shot(&set, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ada9);
        let init = AdapterParams::init_scaled(16, 4, 0.2, LifParams::default(), 4.0, &mut rng);
        assert_eq!(out.params, init);
        assert_eq!(out.best_epoch, 0);
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn shots_are_per_class_and_seeded() {
        let set = small_set();
        let a = fewshot_indices(&set, 3, 1).unwrap();
        assert_eq!(a.len(), 12);
        for class in 0..4 {
            assert_eq!(
                a.iter().filter(|&&i| set.samples[i].label == class).count(),
                3
            );
        }
        assert!(a.iter().all(|&i| set.samples[i].split == Split::Train));
        assert_eq!(a, fewshot_indices(&set, 3, 1).unwrap());
        assert_ne!(a, fewshot_indices(&set, 3, 2).unwrap());
    }

    #[test]
    fn deterministic_training() {
        let set = small_set();
        let mut cfg = TrainConfig::new(4, 2);
        cfg.epochs = 15;
        let a = train_few_shot(&set, &cfg).unwrap();
        let b = train_few_shot(&set, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loss_decreases() {
        let set = small_set();
        let mut cfg = TrainConfig::new(6, 2);
        cfg.epochs = 60;
        cfg.patience = 1000;
        let out = train_few_shot(&set, &cfg).unwrap();
        let first = out.history[1].loss;
        let last = out.history.last().unwrap().loss;
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn alpha_length_checked() {
        let set = small_set();
        let mut cfg = TrainConfig::new(1, 2);
        cfg.fusion = FusionConfig::uniform(3);
        assert!(matches!(
            train_few_shot(&set, &cfg),
            Err(AdapterError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut p = AdapterParams::zeros(1, 1, 0.5, LifParams::default());
        let mut g = AdapterGrads::zeros_like(&p);
        g.b_up = vec![2.0];
        g.w_down = vec![-1.0];
        let mut adam = Adam::new(0.1, &p);
        adam.step(&mut p, &g);
        // First bias-corrected step is lr * sign(g).
        assert!((p.b_up[0] + 0.1).abs() < 1e-9);
        assert!((p.w_down[0] - 0.1).abs() < 1e-9);
        assert_eq!(p.w_up[0], 0.0);
    }
}
