//! Spiking inter-timestep adapter.
//!
//! A residual bottleneck `C -> H_b -> C` whose hidden layer is a population of
//! leaky integrate-and-fire neurons. Timesteps are fed in order, so membrane
//! potential carried between steps couples the per-timestep features:
//!
//! ```text
//! h_i  = W_down f_i + b_down
//! v_i  = leak * u_{i-1} + h_i          (pre-reset membrane)
//! s_i  = [v_i >= threshold]            (hard) or clip((v_i - threshold)/a + 1/2, 0, 1) (relaxed)
//! u_i  = v_i - threshold * s_i         (soft reset) or v_i * (1 - s_i) (hard reset)
//! f'_i = (1 - beta) f_i + beta (W_up s_i + b_up)
//! ```
//!
//! Gradients use backpropagation through time with the boxcar surrogate
//! `ds/dv = 1/a` on `|v - threshold| <= a/2`, which is exact for the relaxed
//! spike away from its two kinks.

mod checkpoint;
mod lif;
mod train;

pub use self::checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
pub use self::lif::{lif_step, LifParams, LifState, Reset};
pub use self::train::{
    cross_entropy_grad, fewshot_indices, predict_with_adapter, train_few_shot, Adam, EpochLog,
    TrainConfig, TrainOutcome,
};

use rand::Rng;
use thiserror::Error;

use crate::gateway::EmbeddingMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdapterError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite membrane state at timestep {timestep}")]
    NonFiniteState { timestep: usize },
    #[error("no forward record for timestep {0}")]
    MissingForwardRecord(usize),
    #[error("invalid adapter parameters: {0}")]
    InvalidParams(String),
    #[error("class {class} has {available} training samples, {needed} shots requested")]
    InsufficientSamples {
        class: usize,
        available: usize,
        needed: usize,
    },
    #[error("loss became non-finite at epoch {epoch} (last finite loss {last_loss})")]
    NonFiniteLoss { epoch: usize, last_loss: f64 },
    #[error(transparent)]
    Fusion(#[from] crate::fusion::FusionError),
}

/// How spikes are produced in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpikeMode {
    /// Binary Heaviside spikes.
    Hard,
    /// Continuous clipped-ramp pseudo-spikes, differentiable almost everywhere.
    Relaxed,
}

/// Weights of the adapter. `w_down` is `H_b x C`, `w_up` is `C x H_b`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    pub dim: usize,
    pub bottleneck: usize,
    pub w_down: Vec<f64>,
    pub b_down: Vec<f64>,
    pub w_up: Vec<f64>,
    pub b_up: Vec<f64>,
    pub residual_ratio: f64,
    pub lif: LifParams,
}

impl AdapterParams {
    /// All weights and biases zero.
    pub fn zeros(dim: usize, bottleneck: usize, residual_ratio: f64, lif: LifParams) -> Self {
        AdapterParams {
            dim,
            bottleneck,
            w_down: vec![0.0; bottleneck * dim],
            b_down: vec![0.0; bottleneck],
            w_up: vec![0.0; dim * bottleneck],
            b_up: vec![0.0; dim],
            residual_ratio,
            lif,
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng>(
        dim: usize,
        bottleneck: usize,
        residual_ratio: f64,
        lif: LifParams,
        rng: &mut R,
    ) -> Self {
        Self::init_scaled(dim, bottleneck, residual_ratio, lif, 1.0, rng)
    }

    /// As [`AdapterParams::init`] with the `W_down` bound multiplied by `down_gain`.
    pub fn init_scaled<R: Rng>(
        dim: usize,
        bottleneck: usize,
        residual_ratio: f64,
        lif: LifParams,
        down_gain: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(dim, bottleneck, residual_ratio, lif);
        let down = down_gain / (dim as f64).sqrt();
        let up = 1.0 / (bottleneck as f64).sqrt();
        p.w_down
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-down..down));
        p.w_up.iter_mut().for_each(|w| *w = rng.gen_range(-up..up));
        p
    }

    pub fn validate(&self) -> Result<(), AdapterError> {
        let (c, h) = (self.dim, self.bottleneck);
        if self.w_down.len() != h * c
            || self.b_down.len() != h
            || self.w_up.len() != c * h
            || self.b_up.len() != c
        {
            return Err(AdapterError::DimensionMismatch(format!(
                "parameter blocks do not match C={c}, H_b={h}"
            )));
        }
        if !(0.0..=1.0).contains(&self.residual_ratio) {
            return Err(AdapterError::InvalidParams(format!(
                "residual ratio {} outside [0, 1]",
                self.residual_ratio
            )));
        }
        self.lif.validate()?;
        let finite = [&self.w_down, &self.b_down, &self.w_up, &self.b_up]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(AdapterError::InvalidParams("non-finite weight".into()));
        }
        Ok(())
    }

    /// The four trainable blocks in checkpoint order.
    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.w_down, &self.b_down, &self.w_up, &self.b_up]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.w_down,
            &mut self.b_down,
            &mut self.w_up,
            &mut self.b_up,
        ]
    }
}

/// Gradients with the same shapes as [`AdapterParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrads {
    pub w_down: Vec<f64>,
    pub b_down: Vec<f64>,
    pub w_up: Vec<f64>,
    pub b_up: Vec<f64>,
    pub residual_ratio: f64,
}

impl AdapterGrads {
    pub fn zeros_like(p: &AdapterParams) -> Self {
        AdapterGrads {
            w_down: vec![0.0; p.w_down.len()],
            b_down: vec![0.0; p.b_down.len()],
            w_up: vec![0.0; p.w_up.len()],
            b_up: vec![0.0; p.b_up.len()],
            residual_ratio: 0.0,
        }
    }

    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.w_down, &self.b_down, &self.w_up, &self.b_up]
    }

    /// `self += other`
    pub fn accumulate(&mut self, other: &AdapterGrads) {
        for (a, b) in [
            (&mut self.w_down, &other.w_down),
            (&mut self.b_down, &other.b_down),
            (&mut self.w_up, &other.w_up),
            (&mut self.b_up, &other.b_up),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.residual_ratio += other.residual_ratio;
    }
}

/// Per-timestep values kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub input: Vec<f64>,
    /// Membrane after integration, before reset.
    pub pre_reset: Vec<f64>,
    pub spikes: Vec<f64>,
    /// `W_up s + b_up`.
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRecord {
    pub mode: SpikeMode,
    pub steps: Vec<StepRecord>,
}

fn matvec(m: &[f64], rows: usize, cols: usize, v: &[f64], bias: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| {
            m[r * cols..(r + 1) * cols]
                .iter()
                .zip(v)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + bias[r]
        })
        .collect()
}

fn relaxed_spike(v: f64, lif: &LifParams) -> f64 {
    ((v - lif.threshold) / lif.surrogate_width + 0.5).clamp(0.0, 1.0)
}

/// Boxcar surrogate derivative of the spike w.r.t. the pre-reset membrane.
pub fn surrogate_grad(v: f64, lif: &LifParams) -> f64 {
    if (v - lif.threshold).abs() <= lif.surrogate_width / 2.0 {
        1.0 / lif.surrogate_width
    } else {
        0.0
    }
}

/// Runs the adapter over `rows` (one per timestep, in order) and keeps what
/// [`backward`] needs.
pub fn forward_recorded(
    rows: &[Vec<f64>],
    params: &AdapterParams,
    mode: SpikeMode,
) -> Result<(Vec<Vec<f64>>, ForwardRecord), AdapterError> {
    params.validate()?;
    let (c, h) = (params.dim, params.bottleneck);
    let lif = &params.lif;
    let beta = params.residual_ratio;
    let mut state = LifState::zeros(h);
    let mut outputs = Vec::with_capacity(rows.len());
    let mut steps = Vec::with_capacity(rows.len());
    for (i, f) in rows.iter().enumerate() {
        if f.len() != c {
            return Err(AdapterError::DimensionMismatch(format!(
                "timestep {i} has {} features, adapter expects {c}",
                f.len()
            )));
        }
        let current = matvec(&params.w_down, h, c, f, &params.b_down);
        let (pre_reset, spikes) = match mode {
            SpikeMode::Hard => {
                let pre: Vec<f64> = state
                    .membrane
                    .iter()
                    .zip(&current)
                    .map(|(u, x)| lif.leak * u + x)
                    .collect();
                let (next, s) = lif_step(&state, &current, lif)
                    .map_err(|_| AdapterError::NonFiniteState { timestep: i })?;
                state = next;
                (pre, s)
            }
            SpikeMode::Relaxed => {
                let mut pre = Vec::with_capacity(h);
                let mut s = Vec::with_capacity(h);
                for (u, x) in state.membrane.iter_mut().zip(&current) {
                    let v = lif.leak * *u + x;
                    if !v.is_finite() {
                        return Err(AdapterError::NonFiniteState { timestep: i });
                    }
                    let spike = relaxed_spike(v, lif);
                    *u = match lif.reset {
                        Reset::Soft => v - lif.threshold * spike,
                        Reset::Hard => v * (1.0 - spike),
                    };
                    pre.push(v);
                    s.push(spike);
                }
                state.spikes = s.clone();
                (pre, s)
            }
        };
        let output = matvec(&params.w_up, c, h, &spikes, &params.b_up);
        outputs.push(
            f.iter()
                .zip(&output)
                .map(|(x, o)| (1.0 - beta) * x + beta * o)
                .collect(),
        );
        steps.push(StepRecord {
            input: f.clone(),
            pre_reset,
            spikes,
            output,
        });
    }
    Ok((outputs, ForwardRecord { mode, steps }))
}

fn widen(m: &EmbeddingMatrix) -> Vec<Vec<f64>> {
    m.iter_rows()
        .map(|r| r.iter().map(|&x| x as f64).collect())
        .collect()
}

/// Adapted features with binary spikes.
pub fn adapter_forward(
    features: &EmbeddingMatrix,
    params: &AdapterParams,
) -> Result<Vec<Vec<f64>>, AdapterError> {
    Ok(forward_recorded(&widen(features), params, SpikeMode::Hard)?.0)
}

/// Adapted features with continuous pseudo-spikes.
pub fn adapter_forward_relaxed(
    features: &EmbeddingMatrix,
    params: &AdapterParams,
) -> Result<Vec<Vec<f64>>, AdapterError> {
    Ok(forward_recorded(&widen(features), params, SpikeMode::Relaxed)?.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BackwardOptions {
    /// Treat the reset term as a constant (no gradient through `s` in `u`).
    pub detach_reset: bool,
}

/// Backpropagation through time from `upstream[i] = dL/df'_i`.
pub fn backward(
    params: &AdapterParams,
    record: &ForwardRecord,
    upstream: &[Vec<f64>],
    opts: BackwardOptions,
) -> Result<AdapterGrads, AdapterError> {
    let (c, h) = (params.dim, params.bottleneck);
    if record.steps.len() < upstream.len() {
        return Err(AdapterError::MissingForwardRecord(record.steps.len()));
    }
    if record.steps.len() > upstream.len() {
        return Err(AdapterError::DimensionMismatch(format!(
            "{} upstream gradients for {} recorded timesteps",
            upstream.len(),
            record.steps.len()
        )));
    }
    let lif = &params.lif;
    let beta = params.residual_ratio;
    let mut g = AdapterGrads::zeros_like(params);
    // dL/du_i flowing back from step i+1.
    let mut d_membrane = vec![0.0; h];

    for (i, (step, up)) in record.steps.iter().zip(upstream).enumerate().rev() {
        if up.len() != c || step.input.len() != c || step.spikes.len() != h {
            return Err(AdapterError::DimensionMismatch(format!(
                "timestep {i}: upstream {} / input {} / spikes {} vs C={c}, H_b={h}",
                up.len(),
                step.input.len(),
                step.spikes.len()
            )));
        }
        // f'_i = (1 - beta) f_i + beta o_i
        g.residual_ratio += up
            .iter()
            .zip(&step.output)
            .zip(&step.input)
            .map(|((gi, o), x)| gi * (o - x))
            .sum::<f64>();
        let d_out: Vec<f64> = up.iter().map(|gi| beta * gi).collect();

        let mut d_spikes = vec![0.0; h];
        for r in 0..c {
            g.b_up[r] += d_out[r];
            for k in 0..h {
                g.w_up[r * h + k] += d_out[r] * step.spikes[k];
                d_spikes[k] += params.w_up[r * h + k] * d_out[r];
            }
        }

        let mut d_pre = vec![0.0; h];
        for k in 0..h {
            let v = step.pre_reset[k];
            let s = step.spikes[k];
            let (du_dv, du_ds) = match lif.reset {
                Reset::Soft => (1.0, -lif.threshold),
                Reset::Hard => (1.0 - s, -v),
            };
            let ds = d_spikes[k]
                + if opts.detach_reset {
                    0.0
                } else {
                    du_ds * d_membrane[k]
                };
            d_pre[k] = du_dv * d_membrane[k] + ds * surrogate_grad(v, lif);
        }

        for k in 0..h {
            g.b_down[k] += d_pre[k];
            for (col, x) in step.input.iter().enumerate() {
                g.w_down[k * c + col] += d_pre[k] * x;
            }
            d_membrane[k] = lif.leak * d_pre[k];
        }
    }
    Ok(g)
}
