use std::marker::PhantomData;
use std::sync::Arc;

use crate::cache::{content_key, RecordCache};
use crate::embedding::{EmbeddingBackend, EmbeddingVector};
use crate::error::{BackendError, Error, Result};
use crate::scalar::Scalar;

/// Joiner placed between a post's text and its caption before encoding.
pub const FUSION_SEPARATOR: &str = " [SEP] ";

/// `text [SEP] caption`, text first.
pub fn fuse(text: &str, caption: &str) -> String {
    format!("{text}{FUSION_SEPARATOR}{caption}")
}

pub type EmbeddingCache = RecordCache<Vec<f64>>;

/// Cached front end over an [`EmbeddingBackend`].
///
/// Cache misses of one call are sent to the backend as a single batch (split
/// into `batch_size` chunks); results always come back in request order.
pub struct Encoder<'a, S> {
    backend: &'a dyn EmbeddingBackend,
    cache: Arc<EmbeddingCache>,
    batch_size: usize,
    _scalar: PhantomData<S>,
}

impl<'a, S: Scalar> Encoder<'a, S> {
    pub fn new(backend: &'a dyn EmbeddingBackend, cache: Arc<EmbeddingCache>) -> Self {
        Encoder {
            backend,
            cache,
            batch_size: 64,
            _scalar: PhantomData,
        }
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    pub fn backend(&self) -> &dyn EmbeddingBackend {
        self.backend
    }

    fn key(&self, input: &str) -> String {
        content_key(["embed", self.backend.model_id(), input])
    }

    /// Raw vectors in request order. May contain zero vectors.
    pub fn embed_raw(&self, inputs: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut out: Vec<Option<Vec<f64>>> = inputs.iter().map(|s| self.cache.get(&self.key(s))).collect();
        let mut missing: Vec<usize> = (0..inputs.len()).filter(|i| out[*i].is_none()).collect();
        // Identical inputs in one request are fetched once.
        let mut seen = std::collections::HashSet::new();
        missing.retain(|i| seen.insert(inputs[*i].as_str()));

        for chunk in missing.chunks(self.batch_size) {
            let batch: Vec<String> = chunk.iter().map(|i| inputs[*i].clone()).collect();
            let vectors = self.backend.embed_batch(&batch)?;
            if vectors.len() != batch.len() {
                return Err(BackendError::Protocol(format!("asked for {} vectors, got {}", batch.len(), vectors.len())).into());
            }
            for (input, v) in batch.iter().zip(vectors) {
                if v.len() != self.backend.dim() {
                    return Err(BackendError::Config(format!(
                        "{} returned dimension {}, expected {}",
                        self.backend.model_id(),
                        v.len(),
                        self.backend.dim()
                    ))
                    .into());
                }
                self.cache.insert(self.key(input), v)?;
            }
        }
        for (i, slot) in out.iter_mut().enumerate() {
            if slot.is_none() {
                *slot = self.cache.get(&self.key(&inputs[i]));
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled above")).collect())
    }

    pub fn embed_texts(&self, inputs: &[String]) -> Result<Vec<EmbeddingVector<S>>> {
        self.embed_raw(inputs)?.iter().map(|v| EmbeddingVector::from_f64(v)).collect()
    }

    pub fn embed_text(&self, input: &str) -> Result<EmbeddingVector<S>> {
        Ok(self.embed_texts(&[input.to_string()])?.remove(0))
    }

    /// Encode a text/caption pair as one fused input.
    pub fn embed_fused(&self, text: &str, caption: &str) -> Result<EmbeddingVector<S>> {
        if text.trim().is_empty() {
            return Err(Error::Invalid("cannot embed an empty text".into()));
        }
        self.embed_text(&fuse(text, caption))
    }
}
