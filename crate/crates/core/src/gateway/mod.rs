//! Embedding matrices handed over by the external encoder bridge.
//!
//! Text-class embeddings (`K x C`) and per-timestep visual embeddings
//! (`T x C`) arrive as `NCEM` files; this module decodes, validates and
//! optionally L2-normalizes them.

mod manifest;
mod ncem;

pub use self::manifest::{
    load_embedding_set, text_path, visual_path, EmbeddingSet, Manifest, Record, Sample, Split,
};
pub use self::ncem::{read_ncem, write_ncem};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("bad magic {0:?}, expected \"NCEM\"")]
    BadMagic([u8; 4]),
    #[error("unsupported NCEM version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown role tag {0}")]
    BadRole(u8),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("value #{index} is not finite ({value})")]
    NonFiniteValue { index: usize, value: f32 },
    #[error("row {0} has zero norm")]
    ZeroRow(usize),
    #[error("invalid row labels: {0}")]
    BadLabels(String),
    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("{path}: {source}")]
    Artifact {
        path: PathBuf,
        #[source]
        source: Box<GatewayError>,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    Text = 0,
    Visual = 1,
}

impl TryFrom<u8> for Role {
    type Error = GatewayError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Role::Text),
            1 => Ok(Role::Visual),
            other => Err(GatewayError::BadRole(other)),
        }
    }
}

/// Row-major `f32` matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    role: Role,
    rows: usize,
    cols: usize,
    values: Vec<f32>,
    labels: Option<Vec<String>>,
}

impl EmbeddingMatrix {
    pub fn new(
        role: Role,
        rows: usize,
        cols: usize,
        values: Vec<f32>,
    ) -> Result<Self, GatewayError> {
        if rows.checked_mul(cols) != Some(values.len()) {
            return Err(GatewayError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows.saturating_mul(cols),
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GatewayError::NonFiniteValue {
                index,
                value: values[index],
            });
        }
        Ok(EmbeddingMatrix {
            role,
            rows,
            cols,
            values,
            labels: None,
        })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(role: Role, rows: &[Vec<f32>]) -> Result<Self, GatewayError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(GatewayError::DimensionMismatch(format!(
                "row {bad} has {} columns, expected {cols}",
                rows[bad].len()
            )));
        }
        Self::new(role, rows.len(), cols, rows.concat())
    }

    /// Attaches one label per row. Labels may not contain newlines.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, GatewayError> {
        if labels.len() != self.rows {
            return Err(GatewayError::BadLabels(format!(
                "{} labels for {} rows",
                labels.len(),
                self.rows
            )));
        }
        if labels.iter().any(|l| l.contains('\n')) {
            return Err(GatewayError::BadLabels("label contains a newline".into()));
        }
        // An empty label block cannot be told apart from "no labels" on disk.
        self.labels = if labels.concat().is_empty() && labels.len() <= 1 {
            None
        } else {
            Some(labels)
        };
        Ok(self)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> + '_ {
        // chunks_exact(0) panics; a zero-column matrix has empty rows.
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Scales every row to unit Euclidean norm.
    pub fn l2_normalize_rows(&self) -> Result<Self, GatewayError> {
        let mut values = Vec::with_capacity(self.values.len());
        for (i, row) in self.iter_rows().enumerate() {
            let norm = row
                .iter()
                .map(|&v| (v as f64) * (v as f64))
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 {
                return Err(GatewayError::ZeroRow(i));
            }
            values.extend(row.iter().map(|&v| (v as f64 / norm) as f32));
        }
        Ok(EmbeddingMatrix {
            values,
            labels: self.labels.clone(),
            ..*self
        })
    }
}
