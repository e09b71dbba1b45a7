#![allow(dead_code)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spikeshot_core::adapter::{
    backward, forward_recorded, AdapterParams, BackwardOptions, LifParams, Reset, SpikeMode,
};
use spikeshot_core::event_io::{Event, EventStream, Polarity};
use spikeshot_core::projection::{OverwritePolicy, ProjectionConfig, WindowPolicy};

pub fn arb_event(width: u16, height: u16, t_max: u64) -> impl Strategy<Value = Event> {
    (0..=t_max, 0..width, 0..height, any::<bool>())
        .prop_map(|(t, x, y, on)| Event::new(t, x, y, Polarity::from_bit(on)))
}

/// Streams on sensors up to `max_side` with up to `max_events` events. The
/// timestamp range is drawn too, so ties and degenerate spans both show up.
pub fn arb_stream(max_side: u16, max_events: usize) -> impl Strategy<Value = EventStream> {
    (
        1..=max_side,
        1..=max_side,
        prop_oneof![Just(0u64), 1..20u64, 1..100_000u64],
    )
        .prop_flat_map(move |(w, h, t_max)| {
            proptest::collection::vec(arb_event(w, h, t_max), 0..=max_events)
                .prop_map(move |ev| EventStream::new(w, h, ev).unwrap())
        })
}

pub fn arb_projection(max_t: usize) -> impl Strategy<Value = ProjectionConfig> {
    (
        1..=max_t,
        prop_oneof![
            Just(WindowPolicy::EqualDuration),
            Just(WindowPolicy::EqualCount)
        ],
        prop_oneof![
            Just(OverwritePolicy::LastEventWins),
            Just(OverwritePolicy::OnDominates)
        ],
    )
        .prop_map(|(t, w, o)| ProjectionConfig::new(t).with_window(w).with_overwrite(o))
}

/// Deterministic random stream for the acceptance loop.
pub fn random_stream(rng: &mut ChaCha8Rng, max_side: u16, max_events: usize) -> EventStream {
    let n = rng.gen_range(0..=max_events);
    random_stream_of(rng, max_side, n)
}

/// Deterministic random stream with exactly `n` events.
pub fn random_stream_of(rng: &mut ChaCha8Rng, max_side: u16, n: usize) -> EventStream {
    let w = rng.gen_range(1..=max_side);
    let h = rng.gen_range(1..=max_side);
    let t_max = match rng.gen_range(0..3) {
        0 => 0,
        1 => rng.gen_range(1..20),
        _ => rng.gen_range(1..100_000),
    };
    let events = (0..n)
        .map(|_| {
            Event::new(
                rng.gen_range(0..=t_max),
                rng.gen_range(0..w),
                rng.gen_range(0..h),
                Polarity::from_bit(rng.gen()),
            )
        })
        .collect();
    EventStream::new(w, h, events).unwrap()
}

pub struct GradCase {
    pub params: AdapterParams,
    pub rows: Vec<Vec<f64>>,
    pub upstream: Vec<Vec<f64>>,
}

/// Random small adapter instance whose membranes are spread across the
/// surrogate window, so every gradient path is exercised.
pub fn random_grad_case(rng: &mut ChaCha8Rng) -> GradCase {
    let c = rng.gen_range(1..=8);
    let h = rng.gen_range(1..=4);
    let t = rng.gen_range(1..=4);
    let lif = LifParams {
        leak: rng.gen_range(0.2..=1.0),
        threshold: rng.gen_range(0.5..1.5),
        surrogate_width: rng.gen_range(0.5..2.0),
        reset: if rng.gen() { Reset::Soft } else { Reset::Hard },
    };
    let mut params = AdapterParams::init(c, h, rng.gen_range(0.1..0.9), lif, rng);
    params.w_down.iter_mut().for_each(|w| *w *= 3.0);
    params
        .b_down
        .iter_mut()
        .for_each(|b| *b = rng.gen_range(0.0..1.0));
    params
        .b_up
        .iter_mut()
        .for_each(|b| *b = rng.gen_range(-1.0..1.0));
    let rows = (0..t)
        .map(|_| (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let upstream = (0..t)
        .map(|_| (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    GradCase {
        params,
        rows,
        upstream,
    }
}

/// Smallest distance from any pre-reset membrane to a kink of the clipped ramp.
pub fn kink_distance(case: &GradCase) -> f64 {
    let lif = case.params.lif;
    let (_, rec) = forward_recorded(&case.rows, &case.params, SpikeMode::Relaxed).unwrap();
    let lo = lif.threshold - lif.surrogate_width / 2.0;
    let hi = lif.threshold + lif.surrogate_width / 2.0;
    rec.steps
        .iter()
        .flat_map(|s| s.pre_reset.iter())
        .map(|&v| (v - lo).abs().min((v - hi).abs()))
        .fold(f64::INFINITY, f64::min)
}

/// `L = sum_i <upstream_i, f'_i>` under the relaxed forward pass.
pub fn linear_loss(params: &AdapterParams, rows: &[Vec<f64>], upstream: &[Vec<f64>]) -> f64 {
    let (out, _) = forward_recorded(rows, params, SpikeMode::Relaxed).unwrap();
    out.iter()
        .zip(upstream)
        .map(|(o, g)| o.iter().zip(g).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

pub const FD_STEP: f64 = 1e-4;

/// Central differences of [`linear_loss`] over every trainable scalar, in
/// block order `w_down, b_down, w_up, b_up`, followed by `beta`.
pub fn finite_difference(case: &GradCase) -> Vec<f64> {
    let mut out = Vec::new();
    for block in 0..4 {
        let len = case.params.blocks()[block].len();
        for j in 0..len {
            let mut plus = case.params.clone();
            plus.blocks_mut()[block][j] += FD_STEP;
            let mut minus = case.params.clone();
            minus.blocks_mut()[block][j] -= FD_STEP;
            out.push(
                (linear_loss(&plus, &case.rows, &case.upstream)
                    - linear_loss(&minus, &case.rows, &case.upstream))
                    / (2.0 * FD_STEP),
            );
        }
    }
    let mut plus = case.params.clone();
    plus.residual_ratio += FD_STEP;
    let mut minus = case.params.clone();
    minus.residual_ratio -= FD_STEP;
    out.push(
        (linear_loss(&plus, &case.rows, &case.upstream)
            - linear_loss(&minus, &case.rows, &case.upstream))
            / (2.0 * FD_STEP),
    );
    out
}

pub fn analytic_gradient(case: &GradCase) -> Vec<f64> {
    let (_, rec) = forward_recorded(&case.rows, &case.params, SpikeMode::Relaxed).unwrap();
    let g = backward(
        &case.params,
        &rec,
        &case.upstream,
        BackwardOptions::default(),
    )
    .unwrap();
    let mut out: Vec<f64> = g.blocks().iter().flat_map(|b| b.iter().copied()).collect();
    out.push(g.residual_ratio);
    out
}

/// `|a - n| / max(|a|, |n|, 1e-6)`, worst over all components.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
