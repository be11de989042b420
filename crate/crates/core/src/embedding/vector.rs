use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A dense embedding with its Euclidean norm cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector<S> {
    values: Vec<S>,
    norm: S,
}

impl<S: Scalar> EmbeddingVector<S> {
    pub fn new(values: Vec<S>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("embedding has no dimensions".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("embedding contains a non-finite value".into()));
        }
        let norm = values.iter().fold(S::zero(), |acc, v| acc + *v * *v).sqrt();
        Ok(EmbeddingVector { values, norm })
    }

    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|v| S::from_f64(*v)).collect())
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> S {
        self.norm
    }

    pub fn scaled(&self, factor: S) -> Result<Self> {
        Self::new(self.values.iter().map(|v| *v * factor).collect())
    }
}

/// Cosine similarity, clamped to `[-1, 1]`. Zero-norm inputs are an error.
pub fn cosine<S: Scalar>(a: &EmbeddingVector<S>, b: &EmbeddingVector<S>) -> Result<S> {
    if a.dim() != b.dim() {
        return Err(Error::Invalid(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    if a.norm.is_zero() || b.norm.is_zero() {
        return Err(Error::Invalid("cosine similarity of a zero vector is undefined".into()));
    }
    let dot = a.values.iter().zip(&b.values).fold(S::zero(), |acc, (x, y)| acc + *x * *y);
    let c = dot / (a.norm * b.norm);
    Ok(c.max(-S::one()).min(S::one()))
}

/// Indices of the `k` bank vectors most cosine-similar to `query`, best
/// first. Equal similarities keep the lower index first.
pub fn top_k<S: Scalar>(query: &EmbeddingVector<S>, bank: &[EmbeddingVector<S>], k: usize) -> Result<Vec<usize>> {
    if bank.is_empty() {
        return Err(Error::Invalid("empty vector bank".into()));
    }
    if k == 0 || k > bank.len() {
        return Err(Error::Invalid(format!("K = {k} outside 1..={}", bank.len())));
    }
    let sims = bank.iter().map(|v| cosine(query, v)).collect::<Result<Vec<S>>>()?;
    let mut idx: Vec<usize> = (0..bank.len()).collect();
    idx.sort_by(|&i, &j| sims[j].partial_cmp(&sims[i]).unwrap_or(Ordering::Equal).then(i.cmp(&j)));
    idx.truncate(k);
    Ok(idx)
}
