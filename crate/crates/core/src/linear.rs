//! Sparse node-feature vectors, weight vectors and the linear score.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Per-instance feature vector over the nodes of a forest.
///
/// Entries are `(global node index, node score)` pairs for every node the
/// instance traversed, with strictly increasing indices. Zero-valued entries
/// are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseNodeVector {
    entries: Vec<(usize, f64)>,
    dim: usize,
}

impl SparseNodeVector {
    /// Builds a vector from `(index, value)` pairs. Indices must be strictly
    /// increasing and below `dim`.
    pub fn new(entries: Vec<(usize, f64)>, dim: usize) -> Result<Self> {
        let mut prev = None;
        for &(idx, value) in &entries {
            if idx >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: idx + 1,
                });
            }
            if prev.is_some_and(|p| idx <= p) {
                return Err(Error::InvalidParameter("sparse indices must be strictly increasing"));
            }
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    instance: 0,
                    feature: idx,
                });
            }
            prev = Some(idx);
        }
        Ok(Self { entries, dim })
    }

    pub(crate) fn from_sorted_unchecked(entries: Vec<(usize, f64)>, dim: usize) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        Self { entries, dim }
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            entries: Vec::new(),
            dim,
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    /// Number of stored (nonzero) entries.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Dimension `m` of the owning forest.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dot product with a dense slice. The caller guarantees the length.
    #[inline]
    pub(crate) fn dot_dense(&self, w: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * w[i]).sum()
    }

    /// `acc += scale * self`.
    #[inline]
    pub(crate) fn add_scaled_to(&self, acc: &mut [f64], scale: f64) {
        for &(i, v) in &self.entries {
            acc[i] += scale * v;
        }
    }
}

/// Learnable weights, one per forest node.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyList);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                instance: 0,
                feature: i,
            });
        }
        Ok(Self(values))
    }

    /// The unit-norm uniform vector `1/√m`, used both as the initial weights
    /// and as the regularization prior.
    pub fn uniform(m: usize) -> Self {
        assert!(m > 0, "weight vector needs at least one node");
        let v = 1.0 / libm::sqrt(m as f64);
        Self(vec![v; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|v| v * v).sum::<f64>())
    }

    /// Rescales to unit L2 norm.
    pub fn normalized(mut self) -> Result<Self> {
        let norm = self.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        for v in &mut self.0 {
            *v /= norm;
        }
        Ok(self)
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// Sparse dot product `z · w`. Higher means more anomalous.
pub fn score(z: &SparseNodeVector, w: &WeightVector) -> Result<f64> {
    if z.dim() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            found: z.dim(),
        });
    }
    Ok(z.dot_dense(w.as_slice()))
}
