use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `|V| × D` row-major embedding matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    vocab_size: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        Self {
            vocab_size,
            dim,
            data: vec![0.0; vocab_size * dim],
        }
    }

    pub fn from_rows(vocab_size: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != vocab_size * dim {
            return Err(Error::Alignment(format!(
                "{} values for a {vocab_size}x{dim} table",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite table entry at flat index {i}")));
        }
        Ok(Self {
            vocab_size,
            dim,
            data,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn check_id(&self, id: u32) -> Result<()> {
        if (id as usize) < self.vocab_size {
            Ok(())
        } else {
            Err(Error::Index {
                id,
                vocab_size: self.vocab_size,
            })
        }
    }

    pub fn row(&self, id: u32) -> &[f64] {
        let start = id as usize * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn row_mut(&mut self, id: u32) -> &mut [f64] {
        let start = id as usize * self.dim;
        &mut self.data[start..start + self.dim]
    }

    /// `row(id) -= lr * grad`.
    pub fn apply_row_update(&mut self, id: u32, lr: f64, grad: &[f64]) {
        for (w, g) in self.row_mut(id).iter_mut().zip(grad) {
            *w -= lr * g;
        }
    }

    /// Bitwise equality, so `-0.0` and `0.0` differ.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.vocab_size == other.vocab_size
            && self.dim == other.dim
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// The `K` word ids of a local batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexVector(Vec<u32>);

impl IndexVector {
    pub fn new(ids: Vec<u32>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Contract("index vector must be non-empty".into()));
        }
        Ok(Self(ids))
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_against(&self, vocab_size: usize) -> Result<()> {
        match self.0.iter().find(|&&id| id as usize >= vocab_size) {
            Some(&id) => Err(Error::Index { id, vocab_size }),
            None => Ok(()),
        }
    }
}

/// `K × D` row-major gradient rows aligned with an [`IndexVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBatch {
    dim: usize,
    data: Vec<f64>,
}

impl GradientBatch {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::Alignment(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient at flat index {i}")));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn check_aligned(&self, ids: &IndexVector) -> Result<()> {
        if self.rows() != ids.len() {
            return Err(Error::Alignment(format!(
                "{} gradient rows for {} indices",
                self.rows(),
                ids.len()
            )));
        }
        Ok(())
    }
}

/// Sorted distinct ids plus, for each original position, where its id sits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniqueIndexVector {
    pub ids: Vec<u32>,
    pub position_map: Vec<u32>,
}

impl UniqueIndexVector {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Rebuilds the original sequence from `ids` and `position_map`.
    pub fn expand(&self) -> Vec<u32> {
        self.position_map.iter().map(|&p| self.ids[p as usize]).collect()
    }
}

/// `U_g × D` matrix whose row `r` belongs to the `r`-th globally unique id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl ScatterMatrix {
    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }
}
