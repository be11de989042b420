use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::BackendError;
use crate::http::{join_url, HttpConfig, JsonClient};

/// Anything that maps strings to fixed-length vectors.
///
/// Pooling token states into one vector is the backend's business; it is
/// reported through [`EmbeddingBackend::pooling`] and recorded in run
/// manifests.
pub trait EmbeddingBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed_batch(&self, inputs: &[String]) -> Result<Vec<Vec<f64>>, BackendError>;

    fn pooling(&self) -> &str {
        "backend-defined"
    }
}

fn fnv1a64(chunks: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for c in chunks {
        for b in *c {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Deterministic offline embedder.
///
/// Each whitespace token `t` gets a feature vector whose `j`-th entry is
/// `u * 2 - 1` with `u = (fnv1a64(le_bytes(j as u32) ++ t) >> 11) / 2^53`;
/// the input's embedding is the mean over its tokens (all zeros for an
/// input without tokens).
pub struct MockEmbedder {
    model_id: String,
    dim: usize,
    calls: AtomicUsize,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        MockEmbedder {
            model_id: format!("mock-hash-{dim}"),
            dim,
            calls: AtomicUsize::new(0),
        }
    }

    /// Number of `embed_batch` calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn embed_one(&self, input: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let mut n = 0usize;
        for tok in input.split_whitespace() {
            n += 1;
            for (j, slot) in out.iter_mut().enumerate() {
                let h = fnv1a64(&[&(j as u32).to_le_bytes(), tok.as_bytes()]);
                let u = (h >> 11) as f64 / (1u64 << 53) as f64;
                *slot += u * 2.0 - 1.0;
            }
        }
        if n > 0 {
            for slot in &mut out {
                *slot /= n as f64;
            }
        }
        out
    }
}

impl EmbeddingBackend for MockEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, inputs: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(inputs.iter().map(|s| self.embed_one(s)).collect())
    }

    fn pooling(&self) -> &str {
        "mean-of-token-hash-features"
    }
}

/// Refuses every request; pairs with a warm cache for fully offline runs.
pub struct OfflineEmbedder {
    pub model_id: String,
    pub dim: usize,
}

impl EmbeddingBackend for OfflineEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, inputs: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        Err(BackendError::Config(format!(
            "offline embedding backend: {} input(s) missing from cache",
            inputs.len()
        )))
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    inputs: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for the `POST /embed` contract:
/// `{model, inputs: [string]}` to `{vectors: [[number]]}`.
pub struct HttpEmbedder {
    endpoint: String,
    model_id: String,
    dim: usize,
    client: JsonClient,
}

impl HttpEmbedder {
    pub fn new(
        endpoint: &str,
        model_id: &str,
        dim: usize,
        api_key: Option<String>,
        http: HttpConfig,
    ) -> Result<Self, BackendError> {
        Ok(HttpEmbedder {
            endpoint: join_url(endpoint, "embed"),
            model_id: model_id.to_string(),
            dim,
            client: JsonClient::new(http, api_key)?,
        })
    }
}

impl EmbeddingBackend for HttpEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, inputs: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let resp: EmbedResponse = self.client.post(
            &self.endpoint,
            &EmbedRequest {
                model: &self.model_id,
                inputs,
            },
        )?;
        if resp.vectors.len() != inputs.len() {
            return Err(BackendError::Protocol(format!(
                "asked for {} vectors, got {}",
                inputs.len(),
                resp.vectors.len()
            )));
        }
        Ok(resp.vectors)
    }
}

#[derive(Serialize)]
struct OpenAiEmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct OpenAiEmbedResponse {
    data: Vec<OpenAiEmbedding>,
}

#[derive(Deserialize)]
struct OpenAiEmbedding {
    index: usize,
    embedding: Vec<f64>,
}

/// Adapter for OpenAI-compatible `POST /v1/embeddings` servers.
pub struct OpenAiEmbedder {
    endpoint: String,
    model_id: String,
    dim: usize,
    client: JsonClient,
}

impl OpenAiEmbedder {
    pub fn new(
        base_url: &str,
        model_id: &str,
        dim: usize,
        api_key: Option<String>,
        http: HttpConfig,
    ) -> Result<Self, BackendError> {
        Ok(OpenAiEmbedder {
            endpoint: join_url(base_url, "v1/embeddings"),
            model_id: model_id.to_string(),
            dim,
            client: JsonClient::new(http, api_key)?,
        })
    }
}

impl EmbeddingBackend for OpenAiEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, inputs: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let resp: OpenAiEmbedResponse = self.client.post(
            &self.endpoint,
            &OpenAiEmbedRequest {
                model: &self.model_id,
                input: inputs,
            },
        )?;
        let mut out = vec![None; inputs.len()];
        for item in resp.data {
            let slot = out
                .get_mut(item.index)
                .ok_or_else(|| BackendError::Protocol(format!("embedding index {} out of range", item.index)))?;
            *slot = Some(item.embedding);
        }
        out.into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| BackendError::Protocol(format!("no embedding for input {i}"))))
            .collect()
    }
}
