//! Generated embedding sets for tests, demos and the acceptance suite.
//!
//! Text rows are random unit vectors `t_k`. Visual features of class `k` sit
//! around `normalize(t_k + confusion * t_{(k+1) mod K})`, so with
//! `confusion = 1` zero-shot scoring cannot tell `k` from `k + 1` while the
//! visual clusters themselves stay separable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::gateway::{
    EmbeddingMatrix, EmbeddingSet, GatewayError, Manifest, Record, Role, Sample, Split,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    pub timesteps: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Weight of the neighbouring class's text direction in the visual mean.
    pub confusion: f64,
    /// Standard deviation of per-coordinate Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 4,
            dim: 16,
            timesteps: 2,
            train_per_class: 32,
            test_per_class: 25,
            confusion: 1.0,
            noise: 0.05,
            seed: 0,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Builds a unit-normalized embedding set; ids are `<split>/<class>/<n>`.
pub fn generate(spec: &SyntheticSpec) -> Result<EmbeddingSet, GatewayError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (k, c) = (spec.classes, spec.dim);
    let text_rows: Vec<Vec<f64>> = (0..k).map(|_| normalized(gaussian(&mut rng, c))).collect();
    let means: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let next = &text_rows[(j + 1) % k];
            normalized(
                text_rows[j]
                    .iter()
                    .zip(next)
                    .map(|(a, b)| a + spec.confusion * b)
                    .collect(),
            )
        })
        .collect();

    let classes: Vec<String> = (0..k).map(|j| format!("class{j}")).collect();
    let mut records = Vec::new();
    let mut samples = Vec::new();
    for (split, per_class) in [
        (Split::Train, spec.train_per_class),
        (Split::Test, spec.test_per_class),
    ] {
        let split_name = match split {
            Split::Train => "train",
            Split::Test => "test",
        };
        for (label, mean) in means.iter().enumerate() {
            for n in 0..per_class {
                let rows: Vec<Vec<f32>> = (0..spec.timesteps)
                    .map(|_| {
                        let noise = gaussian(&mut rng, c);
                        to_f32(&normalized(
                            mean.iter()
                                .zip(noise)
                                .map(|(m, e)| m + spec.noise * e)
                                .collect(),
                        ))
                    })
                    .collect();
                let id = format!("{split_name}/{}/{n:04}", classes[label]);
                records.push(Record {
                    id: id.clone(),
                    label,
                    split,
                    frames: None,
                });
                samples.push(Sample {
                    id,
                    label,
                    split,
                    features: EmbeddingMatrix::from_rows(Role::Visual, &rows)?,
                });
            }
        }
    }
    let text_rows: Vec<Vec<f32>> = text_rows.iter().map(|r| to_f32(r)).collect();
    let text = EmbeddingMatrix::from_rows(Role::Text, &text_rows)?.with_labels(classes.clone())?;
    let manifest = Manifest {
        dataset: "synthetic".into(),
        classes,
        timesteps: spec.timesteps,
        dim: Some(c),
        sensor: None,
        records,
    };
    EmbeddingSet::new(manifest, text, samples)
}
