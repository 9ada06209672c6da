use std::fmt;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Identity label shared by every image and text of one person.
///
/// Relevance for all metrics is defined by equality of this value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PersonId(pub u64);

impl fmt::Display for PersonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A gallery image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub image_id: String,
    pub person_id: PersonId,
    pub source_path: String,
    pub embedding_index: usize,
}

/// A text query. `image_id` names the image the caption was written for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextRecord {
    pub text_id: String,
    pub person_id: PersonId,
    pub raw_text: String,
    pub embedding_index: usize,
    pub image_id: String,
}

/// Row-major matrix of unit-norm `f32` embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

/// Rows whose L2 norm is already this close to one are left untouched, which
/// keeps normalization idempotent at the bit level.
const UNIT_NORM_SLACK: f64 = 1e-6;

/// Normalizes `row` to unit L2 norm in place. Returns `false` for a zero (or
/// non-finite) row, which is left unchanged.
pub fn normalize_in_place(row: &mut [f32]) -> bool {
    let norm = row.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return false;
    }
    if (norm - 1.0).abs() > UNIT_NORM_SLACK {
        for x in row.iter_mut() {
            *x = (f64::from(*x) / norm) as f32;
        }
    }
    true
}

impl EmbeddingMatrix {
    /// Builds a matrix from raw row-major data, normalizing every row.
    pub fn from_raw(rows: usize, dim: usize, mut data: Vec<f32>) -> Result<Self, CorpusError> {
        if dim == 0 {
            return Err(CorpusError::Validation("embedding dimension must be positive".into()));
        }
        if data.len() != rows * dim {
            return Err(CorpusError::Validation(format!(
                "expected {} floats for {rows}x{dim}, got {}",
                rows * dim,
                data.len()
            )));
        }
        for (i, row) in data.chunks_mut(dim).enumerate() {
            if !normalize_in_place(row) {
                return Err(CorpusError::ZeroRow { row: i });
            }
        }
        Ok(Self { rows, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, CorpusError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(CorpusError::Validation(format!(
                "row {bad} has length {} but dimension is {dim}",
                rows[bad].len()
            )));
        }
        Self::from_raw(rows.len(), dim, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks(self.dim)
    }

    /// New matrix whose row `j` is row `order[j]` of `self`.
    pub fn gather(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(order.len() * self.dim);
        for &i in order {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: order.len(), dim: self.dim, data }
    }
}

/// Parameters of the synthetic identity-cluster benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBenchConfig {
    pub num_identities: usize,
    pub images_per_identity: usize,
    pub texts_per_identity: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticBenchConfig {
    fn default() -> Self {
        Self {
            num_identities: 200,
            images_per_identity: 2,
            texts_per_identity: 1,
            dim: 64,
            noise_sigma: 0.6,
            seed: 42,
        }
    }
}

impl SyntheticBenchConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.num_identities == 0 || self.images_per_identity == 0 || self.texts_per_identity == 0 {
            return Err(CorpusError::Validation("synthetic counts must all be >= 1".into()));
        }
        if self.dim < 2 {
            return Err(CorpusError::Validation("synthetic dim must be >= 2".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(CorpusError::Validation("noise_sigma must be finite and non-negative".into()));
        }
        Ok(())
    }
}
