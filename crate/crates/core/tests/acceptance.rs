//! Exit-gate checks. Prints one PASS/FAIL line per criterion and fails the
//! run if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use rand::Rng;

use common::*;
use spikeshot_core::adapter::{
    predict_with_adapter, read_checkpoint, train_few_shot, write_checkpoint, AdapterParams,
    LifParams, Reset, TrainConfig,
};
use spikeshot_core::event_io::{
    parse_aedat2, parse_csv_events, parse_nmnist_bin, write_csv_events, Event, Polarity,
};
use spikeshot_core::fusion::{classify_fused, classify_single, FusionConfig};
use spikeshot_core::gateway::{read_ncem, write_ncem, EmbeddingMatrix, Role, Split};
use spikeshot_core::projection::{
    project, project_oracle, read_framestack, write_framestack, FrameStack, OverwritePolicy,
    ProjectionConfig, WindowPolicy,
};
use spikeshot_core::synthetic::{generate, SyntheticSpec};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn projection_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(2024);
    let policies = [
        (WindowPolicy::EqualDuration, OverwritePolicy::LastEventWins),
        (WindowPolicy::EqualDuration, OverwritePolicy::OnDominates),
        (WindowPolicy::EqualCount, OverwritePolicy::LastEventWins),
        (WindowPolicy::EqualCount, OverwritePolicy::OnDominates),
    ];
    let mut mismatches = 0;
    let mut cases = 0;
    for i in 0..1000 {
        let stream = random_stream(&mut rng, 8, 200);
        let t = rng.gen_range(1..=5);
        // Every stream under every policy pair.
        for (k, &(window, overwrite)) in policies.iter().enumerate() {
            let cfg = ProjectionConfig::new(t)
                .with_window(window)
                .with_overwrite(overwrite);
            if project(&stream, &cfg).map_err(|e| e.to_string())?
                != project_oracle(&stream, &cfg).map_err(|e| e.to_string())?
            {
                mismatches += 1;
                if mismatches == 1 {
                    eprintln!("first mismatch: stream #{i}, policy #{k}");
                }
            }
            cases += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(mismatches == 0, || {
        format!("{mismatches} mismatches in {cases} cases")
    })?;
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{cases} cases (1000 streams x 4 policies), 0 mismatches, {elapsed:.2?}"
    ))
}

/// Bit-string decoders, written against the documented layouts without
/// shifts or masks.
fn bits(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:08b}")).collect()
}

fn field(bits: &str, range: std::ops::Range<usize>) -> u64 {
    u64::from_str_radix(&bits[range], 2).unwrap()
}

fn reference_nmnist(rec: &[u8; 5]) -> Event {
    let b = bits(rec);
    let pol = if &b[16..17] == "1" {
        Polarity::On
    } else {
        Polarity::Off
    };
    Event::new(
        field(&b, 17..40),
        field(&b, 0..8) as u16,
        field(&b, 8..16) as u16,
        pol,
    )
}

fn reference_aedat(addr: u32, t: u32) -> Event {
    let a = bits(&addr.to_be_bytes());
    // bit n of the address is a[31 - n]
    let x = field(&a, 24..31); // bits 7..1
    let y = field(&a, 17..24); // bits 14..8
    let pol = if &a[31..32] == "0" {
        Polarity::On
    } else {
        Polarity::Off
    };
    Event::new(
        field(&bits(&t.to_be_bytes()), 0..32),
        x as u16,
        y as u16,
        pol,
    )
}

fn parser_correctness() -> Outcome {
    let nmnist: [[u8; 5]; 5] = [
        [0x03, 0x05, 0x80, 0x00, 0x0A],
        [0x21, 0x00, 0x7F, 0xFF, 0xFF],
        [0x00, 0x21, 0x81, 0x02, 0x03],
        [0x10, 0x11, 0x00, 0x00, 0x00],
        [0x07, 0x09, 0xC0, 0x10, 0x01],
    ];
    for rec in &nmnist {
        let got = parse_nmnist_bin(rec).map_err(|e| e.to_string())?;
        let want = reference_nmnist(rec);
        ensure(got.events() == [want], || {
            format!("N-MNIST {rec:02x?}: {:?} vs {want:?}", got.events())
        })?;
    }
    let first = parse_nmnist_bin(&nmnist[0]).unwrap().events()[0];
    ensure(first == Event::new(10, 3, 5, Polarity::On), || {
        format!("N-MNIST example decoded as {first:?}")
    })?;

    let aedat: [(u32, u32); 5] = [
        (0x0000_0206, 0x64),
        (0x0000_7FFF, 0xFFFF_FFFE),
        (0x0000_0001, 0),
        (0xFFFF_0F10, 123_456),
        (0x0000_4A95, 42),
    ];
    for &(addr, t) in &aedat {
        let mut file = b"#!AER-DAT2.0\r\n# hand-built\n".to_vec();
        file.extend_from_slice(&addr.to_be_bytes());
        file.extend_from_slice(&t.to_be_bytes());
        let got = parse_aedat2(&file).map_err(|e| e.to_string())?;
        let want = reference_aedat(addr, t);
        ensure(got.events() == [want], || {
            format!("AEDAT {addr:#x}: {:?} vs {want:?}", got.events())
        })?;
    }
    let ex = reference_aedat(0x206, 0x64);
    ensure(ex == Event::new(100, 3, 2, Polarity::On), || {
        format!("AEDAT example decoded as {ex:?}")
    })?;

    let mut rng = seeded(77);
    for i in 0..1000 {
        let s = random_stream(&mut rng, 64, 300);
        let back = parse_csv_events(&write_csv_events(&s), s.width(), s.height())
            .map_err(|e| e.to_string())?;
        ensure(back == s, || {
            format!("CSV round trip failed on stream #{i}")
        })?;
    }
    Ok(
        "5 N-MNIST + 5 AEDAT records match the bit-string reference; 1000 CSV round trips exact"
            .into(),
    )
}

fn random_matrix<R: Rng>(rng: &mut R, role: Role, rows: usize, cols: usize) -> EmbeddingMatrix {
    let v = (0..rows * cols)
        .map(|_| rng.gen_range(-1.0f32..1.0))
        .collect();
    EmbeddingMatrix::new(role, rows, cols, v).unwrap()
}

fn fusion_reduction() -> Outcome {
    let mut rng = seeded(31);
    let mut worst_sum = 0.0f64;
    for i in 0..100 {
        let k = rng.gen_range(1..=12);
        let c = rng.gen_range(1..=32);
        let text = random_matrix(&mut rng, Role::Text, k, c);
        let feat = random_matrix(&mut rng, Role::Visual, 1, c);
        let scale = rng.gen_range(0.5..150.0);
        let single = classify_single(&text, feat.row(0), scale).map_err(|e| e.to_string())?;
        let cfg = FusionConfig {
            logit_scale: scale,
            ..FusionConfig::with_alphas(vec![1.0])
        };
        let fused = classify_fused(&text, &feat, &cfg).map_err(|e| e.to_string())?;
        let same_bits = single
            .probabilities
            .iter()
            .zip(&fused.probabilities)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same_bits && single.argmax == fused.argmax, || {
            format!("instance {i}: fused(T=1) differs from single")
        })?;

        let t = rng.gen_range(1..=6);
        let feats = random_matrix(&mut rng, Role::Visual, t, c);
        let alphas: Vec<f64> = (0..t)
            .map(|j| if j == 0 { 0.5 } else { rng.gen_range(0.0..1.0) })
            .collect();
        let cfg = FusionConfig {
            logit_scale: scale,
            ..FusionConfig::with_alphas(alphas.clone())
        };
        let p = classify_fused(&text, &feats, &cfg).map_err(|e| e.to_string())?;
        for pred in [&single, &fused, &p] {
            worst_sum = worst_sum.max((pred.probabilities.iter().sum::<f64>() - 1.0).abs());
        }
        for factor in [0.1, 3.0, 1000.0] {
            let scaled = FusionConfig {
                alphas: alphas.iter().map(|a| a * factor).collect(),
                ..cfg.clone()
            };
            let q = classify_fused(&text, &feats, &scaled).map_err(|e| e.to_string())?;
            ensure(q.argmax == p.argmax, || {
                format!("instance {i}: argmax changed under alpha x{factor}")
            })?;
        }
    }
    ensure(worst_sum < 1e-6, || {
        format!("probabilities off by {worst_sum:e}")
    })?;
    Ok(format!("100 instances bit-identical, max |sum p - 1| = {worst_sum:.1e}, argmax stable under alpha scaling"))
}

fn format_round_trips() -> Outcome {
    let mut rng = seeded(4);
    for _ in 0..200 {
        let (t, h, w) = (
            rng.gen_range(1..=5),
            rng.gen_range(1..=10),
            rng.gen_range(1..=10),
        );
        let pixels = (0..t * h * w)
            .map(|_| [0u8, 127, 255][rng.gen_range(0..3)])
            .collect();
        let windows = (0..t).map(|_| (rng.gen(), rng.gen())).collect();
        let fs = FrameStack::new(t, h, w, pixels, windows).map_err(|e| e.to_string())?;
        let bytes = write_framestack(&fs);
        let back = read_framestack(&bytes).map_err(|e| e.to_string())?;
        ensure(back == fs && write_framestack(&back) == bytes, || {
            "NCFS round trip".into()
        })?;

        let rows = rng.gen_range(0..=8);
        let role = if rng.gen() { Role::Text } else { Role::Visual };
        let cols = rng.gen_range(1..=16);
        let mut m = random_matrix(&mut rng, role, rows, cols);
        if rows > 0 && rng.gen() {
            m = m
                .with_labels((0..rows).map(|i| format!("label-{i}")).collect())
                .unwrap();
        }
        let bytes = write_ncem(&m);
        let back = read_ncem(&bytes).map_err(|e| e.to_string())?;
        ensure(back == m && write_ncem(&back) == bytes, || {
            "NCEM round trip".into()
        })?;

        let lif = LifParams {
            leak: rng.gen_range(0.1f32..1.0) as f64,
            threshold: rng.gen_range(0.1f32..2.0) as f64,
            surrogate_width: rng.gen_range(0.1f32..2.0) as f64,
            reset: if rng.gen() { Reset::Soft } else { Reset::Hard },
        };
        let (c, hb) = (rng.gen_range(1..=16), rng.gen_range(1..=4));
        let mut p = AdapterParams::init(c, hb, rng.gen_range(0.0f32..=1.0) as f64, lif, &mut rng);
        for block in p.blocks_mut() {
            block.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        let bytes = write_checkpoint(&p);
        let back = read_checkpoint(&bytes).map_err(|e| e.to_string())?;
        ensure(back == p && write_checkpoint(&back) == bytes, || {
            "NCAD round trip".into()
        })?;
    }
    Ok("200 random NCFS, NCEM and NCAD instances each byte-exact".into())
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(8128);
    let mut checked = 0;
    let mut skipped = 0;
    let mut worst = 0.0f64;
    while checked < 25 {
        let case = random_grad_case(&mut rng);
        if kink_distance(&case) < 1e-3 {
            skipped += 1;
            continue;
        }
        let err = max_relative_error(&analytic_gradient(&case), &finite_difference(&case));
        worst = worst.max(err);
        ensure(err < 1e-3, || {
            format!("configuration #{checked}: relative error {err:e}")
        })?;
        checked += 1;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!("{checked} configurations ({skipped} near kinks skipped), worst relative error {worst:.1e}, {elapsed:.2?}"))
}

fn zero_ratio_identity() -> Outcome {
    let mut rng = seeded(12);
    for i in 0..100 {
        let (k, c, t) = (
            rng.gen_range(1..=10),
            rng.gen_range(1..=24),
            rng.gen_range(1..=5),
        );
        let text = random_matrix(&mut rng, Role::Text, k, c);
        let feats = random_matrix(&mut rng, Role::Visual, t, c);
        let hb = rng.gen_range(1..=6);
        let mut params = AdapterParams::init(c, hb, 0.0, LifParams::default(), &mut rng);
        params.w_down.iter_mut().for_each(|w| *w *= 5.0);
        params
            .b_up
            .iter_mut()
            .for_each(|b| *b = rng.gen_range(-2.0..2.0));
        let mut cfg = FusionConfig::with_alphas((0..t).map(|_| rng.gen_range(0.1..1.0)).collect());
        cfg.normalize = rng.gen();
        let eq2 = classify_fused(&text, &feats, &cfg).map_err(|e| e.to_string())?;
        let eq3 = predict_with_adapter(&text, &feats, &params, &cfg).map_err(|e| e.to_string())?;
        ensure(eq2 == eq3, || {
            format!("instance {i}: adapter with beta=0 changed the prediction")
        })?;
    }
    Ok("100 random instances: adapted predictions identical to plain fusion".into())
}

fn fewshot_improvement() -> Outcome {
    let start = Instant::now();
    let spec = SyntheticSpec {
        classes: 4,
        dim: 16,
        timesteps: 2,
        train_per_class: 32,
        test_per_class: 25,
        ..SyntheticSpec::default()
    };
    let set = generate(&spec).map_err(|e| e.to_string())?;
    let test: Vec<_> = set.split(Split::Test).collect();
    ensure(test.len() == 100, || format!("{} test samples", test.len()))?;
    let fusion = FusionConfig::uniform(2);
    let accuracy = |pred: &dyn Fn(&EmbeddingMatrix) -> usize| {
        test.iter().filter(|s| pred(&s.features) == s.label).count() as f64 / test.len() as f64
    };
    let zero_shot = accuracy(&|f| classify_fused(&set.text, f, &fusion).unwrap().argmax);

    let cfg = TrainConfig::new(16, 2);
    let a = train_few_shot(&set, &cfg).map_err(|e| e.to_string())?;
    let b = train_few_shot(&set, &cfg).map_err(|e| e.to_string())?;
    ensure(
        write_checkpoint(&a.params) == write_checkpoint(&b.params),
        || "training is not deterministic".into(),
    )?;
    let few_shot = accuracy(&|f| {
        predict_with_adapter(&set.text, f, &a.params, &cfg.fusion)
            .unwrap()
            .argmax
    });
    let elapsed = start.elapsed();
    ensure(few_shot >= zero_shot, || {
        format!("16-shot {few_shot:.3} < zero-shot {zero_shot:.3}")
    })?;
    ensure(few_shot >= 0.9, || {
        format!("16-shot accuracy {few_shot:.3} < 0.9")
    })?;
    ensure(elapsed < Duration::from_secs(300), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "zero-shot {zero_shot:.3} -> 16-shot {few_shot:.3} (best epoch {}), deterministic, {elapsed:.2?}",
        a.best_epoch
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        (
            "projection oracle equivalence",
            projection_oracle_equivalence,
        ),
        ("parser correctness", parser_correctness),
        ("single/fused reduction", fusion_reduction),
        ("format round trips", format_round_trips),
        ("gradient fidelity", gradient_fidelity),
        ("zero residual ratio identity", zero_ratio_identity),
        ("few-shot improvement (synthetic)", fewshot_improvement),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
