//! Stage-2 generation backends behind the `/generate` wire contract.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::BackendError;
use crate::http::{join_url, HttpConfig, JsonClient};
use crate::templates::TrainingExample;

pub trait GenerationBackend: Send + Sync {
    fn model_id(&self) -> &str;
    /// One output per input, in input order.
    fn generate(&self, inputs: &[String]) -> Result<Vec<String>, BackendError>;
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    inputs: &'a [String],
}

#[derive(Deserialize)]
struct GenerateResponse {
    outputs: Vec<String>,
    #[serde(default)]
    #[allow(dead_code)]
    metadata: Option<serde_json::Value>,
}

/// Client for `POST /generate`: `{inputs: [string]}` to `{outputs: [string]}`.
pub struct HttpGenerator {
    endpoint: String,
    model_id: String,
    client: JsonClient,
}

impl HttpGenerator {
    pub fn new(endpoint: &str, model_id: &str, http: HttpConfig) -> Result<Self, BackendError> {
        Ok(HttpGenerator {
            endpoint: join_url(endpoint, "generate"),
            model_id: model_id.to_string(),
            client: JsonClient::new(http, None)?,
        })
    }
}

impl GenerationBackend for HttpGenerator {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn generate(&self, inputs: &[String]) -> Result<Vec<String>, BackendError> {
        let resp: GenerateResponse = self.client.post(&self.endpoint, &GenerateRequest { inputs })?;
        if resp.outputs.len() != inputs.len() {
            return Err(BackendError::Protocol(format!(
                "sent {} inputs, got {} outputs",
                inputs.len(),
                resp.outputs.len()
            )));
        }
        Ok(resp.outputs)
    }
}

/// Replies with the stored target for each known input and an empty string
/// otherwise.
pub struct EchoGenerator {
    targets: HashMap<String, String>,
}

impl EchoGenerator {
    pub fn from_examples(examples: &[TrainingExample]) -> Self {
        EchoGenerator {
            targets: examples
                .iter()
                .filter_map(|e| e.target.as_ref().map(|t| (e.input.clone(), t.clone())))
                .collect(),
        }
    }
}

impl GenerationBackend for EchoGenerator {
    fn model_id(&self) -> &str {
        "echo-mock"
    }

    fn generate(&self, inputs: &[String]) -> Result<Vec<String>, BackendError> {
        Ok(inputs
            .iter()
            .map(|i| self.targets.get(i).cloned().unwrap_or_default())
            .collect())
    }
}

/// Wraps a closure; handy for scripted outputs in tests.
pub struct FnGenerator<F>(pub F);

impl<F> GenerationBackend for FnGenerator<F>
where
    F: Fn(&str) -> String + Send + Sync,
{
    fn model_id(&self) -> &str {
        "fn-mock"
    }

    fn generate(&self, inputs: &[String]) -> Result<Vec<String>, BackendError> {
        Ok(inputs.iter().map(|i| (self.0)(i)).collect())
    }
}
