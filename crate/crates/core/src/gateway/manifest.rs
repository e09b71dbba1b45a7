use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_ncem, EmbeddingMatrix, GatewayError, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One recording of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub label: usize,
    pub split: Split,
    /// NCFS file relative to the manifest directory, when frames were projected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<String>,
}

/// Dataset index shared by `project`, the bridge and the classifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset: String,
    pub classes: Vec<String>,
    pub timesteps: usize,
    /// Embedding width, once known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// `[width, height]` of the sensor the frames were projected from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor: Option<[u16; 2]>,
    pub records: Vec<Record>,
}

impl Manifest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timesteps == 0 {
            return Err(GatewayError::Manifest(
                "timesteps must be at least 1".into(),
            ));
        }
        let k = self.classes.len();
        let mut seen = HashSet::new();
        for r in &self.records {
            if r.label >= k {
                return Err(GatewayError::Manifest(format!(
                    "record {} has label {} but only {k} classes exist",
                    r.id, r.label
                )));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(GatewayError::Manifest(format!(
                    "duplicate record id {}",
                    r.id
                )));
            }
            if r.id.is_empty() || r.id.split('/').any(|part| part.is_empty() || part == "..") {
                return Err(GatewayError::Manifest(format!(
                    "unsafe record id {:?}",
                    r.id
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let m: Manifest =
            serde_json::from_str(text).map_err(|e| GatewayError::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        // Plain data, serialization cannot fail.
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                GatewayError::MissingArtifact(path.to_owned())
            } else {
                GatewayError::Io {
                    path: path.to_owned(),
                    source,
                }
            }
        })?;
        Self::from_json(&text)
    }
}

/// Location of the text-class embeddings inside an embeddings directory.
pub fn text_path(dir: &Path) -> PathBuf {
    dir.join("text.ncem")
}

/// Location of a record's visual embeddings inside an embeddings directory.
pub fn visual_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.ncem"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: usize,
    pub split: Split,
    /// `T x C` visual features, one row per timestep.
    pub features: EmbeddingMatrix,
}

/// A manifest with all of its embeddings loaded and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub manifest: Manifest,
    /// `K x C` text-class embeddings.
    pub text: EmbeddingMatrix,
    pub samples: Vec<Sample>,
}

impl EmbeddingSet {
    /// Checks the cross-file invariants: `K` text rows, shared `C` and `T`.
    pub fn new(
        manifest: Manifest,
        text: EmbeddingMatrix,
        samples: Vec<Sample>,
    ) -> Result<Self, GatewayError> {
        manifest.validate()?;
        let k = manifest.classes.len();
        if text.rows() != k {
            return Err(GatewayError::DimensionMismatch(format!(
                "text embeddings have {} rows for {k} classes",
                text.rows()
            )));
        }
        let c = text.cols();
        if let Some(dim) = manifest.dim {
            if dim != c {
                return Err(GatewayError::DimensionMismatch(format!(
                    "manifest declares C={dim}, text embeddings have C={c}"
                )));
            }
        }
        for s in &samples {
            if s.features.cols() != c || s.features.rows() != manifest.timesteps {
                return Err(GatewayError::DimensionMismatch(format!(
                    "sample {} is {}x{}, expected {}x{c}",
                    s.id,
                    s.features.rows(),
                    s.features.cols(),
                    manifest.timesteps
                )));
            }
            if s.label >= k {
                return Err(GatewayError::Manifest(format!(
                    "sample {} label {} >= {k}",
                    s.id, s.label
                )));
            }
        }
        Ok(EmbeddingSet {
            manifest,
            text,
            samples,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.text.rows()
    }

    pub fn dim(&self) -> usize {
        self.text.cols()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> + '_ {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn l2_normalized(&self) -> Result<Self, GatewayError> {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                Ok(Sample {
                    features: s.features.l2_normalize_rows().map_err(|e| wrap(&s.id, e))?,
                    ..s.clone()
                })
            })
            .collect::<Result<_, GatewayError>>()?;
        Ok(EmbeddingSet {
            manifest: self.manifest.clone(),
            text: self.text.l2_normalize_rows().map_err(|e| wrap("text", e))?,
            samples,
        })
    }
}

fn wrap(what: &str, e: GatewayError) -> GatewayError {
    GatewayError::Artifact {
        path: PathBuf::from(what),
        source: Box::new(e),
    }
}

fn read_matrix(path: &Path, role: Role) -> Result<EmbeddingMatrix, GatewayError> {
    let bytes = fs::read(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            GatewayError::MissingArtifact(path.to_owned())
        } else {
            GatewayError::Io {
                path: path.to_owned(),
                source,
            }
        }
    })?;
    let attach = |e| GatewayError::Artifact {
        path: path.to_owned(),
        source: Box::new(e),
    };
    let m = read_ncem(&bytes).map_err(attach)?;
    if m.role() != role {
        return Err(attach(GatewayError::DimensionMismatch(format!(
            "expected role {role:?}, file has {:?}",
            m.role()
        ))));
    }
    Ok(m)
}

/// Loads `text.ncem` and one `<id>.ncem` per record from `dir`.
///
/// With `normalize` every row of every matrix is scaled to unit length.
pub fn load_embedding_set(
    manifest: &Manifest,
    dir: &Path,
    normalize: bool,
) -> Result<EmbeddingSet, GatewayError> {
    manifest.validate()?;
    let text = read_matrix(&text_path(dir), Role::Text)?;
    let samples = manifest
        .records
        .iter()
        .map(|r| {
            Ok(Sample {
                id: r.id.clone(),
                label: r.label,
                split: r.split,
                features: read_matrix(&visual_path(dir, &r.id), Role::Visual)?,
            })
        })
        .collect::<Result<Vec<_>, GatewayError>>()?;
    let set = EmbeddingSet::new(manifest.clone(), text, samples)?;
    if normalize {
        set.l2_normalized()
    } else {
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> Manifest {
        Manifest {
            dataset: "toy".into(),
            classes: vec!["a".into(), "b".into()],
            timesteps: 2,
            dim: None,
            sensor: None,
            records: vec![Record {
                id: "test/a/0".into(),
                label: 0,
                split: Split::Test,
                frames: None,
            }],
        }
    }

    #[test]
    fn json_round_trip() {
        let m = manifest();
        assert_eq!(Manifest::from_json(&m.to_json()).unwrap(), m);
        assert!(m.to_json().contains("\"split\": \"test\""));
    }

    #[test]
    fn rejects_bad_labels_and_ids() {
        let mut m = manifest();
        m.records[0].label = 2;
        assert!(m.validate().is_err());
        let mut m = manifest();
        m.records[0].id = "../escape".into();
        assert!(m.validate().is_err());
        let mut m = manifest();
        m.records.push(m.records[0].clone());
        assert!(m.validate().is_err());
    }

    #[test]
    fn set_checks_shapes() {
        let m = manifest();
        let text = EmbeddingMatrix::new(Role::Text, 2, 3, vec![1.0; 6]).unwrap();
        let good = Sample {
            id: "test/a/0".into(),
            label: 0,
            split: Split::Test,
            features: EmbeddingMatrix::new(Role::Visual, 2, 3, vec![1.0; 6]).unwrap(),
        };
        assert!(EmbeddingSet::new(m.clone(), text.clone(), vec![good.clone()]).is_ok());
        let bad = Sample {
            features: EmbeddingMatrix::new(Role::Visual, 1, 3, vec![1.0; 3]).unwrap(),
            ..good
        };
        assert!(matches!(
            EmbeddingSet::new(m, text, vec![bad]),
            Err(GatewayError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn missing_files_are_reported_with_path() {
        let dir = tempfile::tempdir().unwrap();
        match load_embedding_set(&manifest(), dir.path(), true) {
            Err(GatewayError::MissingArtifact(p)) => assert_eq!(p, dir.path().join("text.ncem")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
