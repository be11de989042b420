//! Chat-model backends: the `/chat` wire contract, an OpenAI-compatible
//! adapter, a transcript-driven scripted mock, and a request/response cache.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::cache::{content_key, RecordCache};
use crate::error::{BackendError, Error, Result};
use crate::http::{join_url, HttpConfig, JsonClient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

pub trait LlmBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn temperature(&self) -> f64;
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError>;
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct ChatResponse {
    content: String,
}

/// Client for `POST /chat`: `{model, temperature, messages}` to `{content}`.
pub struct HttpChat {
    endpoint: String,
    model_id: String,
    temperature: f64,
    client: JsonClient,
}

impl HttpChat {
    pub fn new(
        endpoint: &str,
        model_id: &str,
        temperature: f64,
        api_key: Option<String>,
        http: HttpConfig,
    ) -> Result<Self, BackendError> {
        Ok(HttpChat {
            endpoint: join_url(endpoint, "chat"),
            model_id: model_id.to_string(),
            temperature,
            client: JsonClient::new(http, api_key)?,
        })
    }
}

impl LlmBackend for HttpChat {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn temperature(&self) -> f64 {
        self.temperature
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let resp: ChatResponse = self.client.post(
            &self.endpoint,
            &ChatRequest {
                model: &self.model_id,
                temperature: self.temperature,
                messages,
            },
        )?;
        Ok(resp.content)
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionMessage,
}

#[derive(Deserialize)]
struct CompletionMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Adapter for OpenAI-compatible `POST /v1/chat/completions` servers.
pub struct OpenAiChat {
    endpoint: String,
    model_id: String,
    temperature: f64,
    client: JsonClient,
}

impl OpenAiChat {
    pub fn new(
        base_url: &str,
        model_id: &str,
        temperature: f64,
        api_key: Option<String>,
        http: HttpConfig,
    ) -> Result<Self, BackendError> {
        Ok(OpenAiChat {
            endpoint: join_url(base_url, "v1/chat/completions"),
            model_id: model_id.to_string(),
            temperature,
            client: JsonClient::new(http, api_key)?,
        })
    }
}

impl LlmBackend for OpenAiChat {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn temperature(&self) -> f64 {
        self.temperature
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let resp: CompletionResponse = self.client.post(
            &self.endpoint,
            &ChatRequest {
                model: &self.model_id,
                temperature: self.temperature,
                messages,
            },
        )?;
        resp.choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| BackendError::Protocol("completion has no choices".into()))
    }
}

/// Refuses every request.
pub struct OfflineLlm {
    pub model_id: String,
    pub temperature: f64,
}

impl LlmBackend for OfflineLlm {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn temperature(&self) -> f64 {
        self.temperature
    }

    fn complete(&self, _messages: &[ChatMessage]) -> Result<String, BackendError> {
        Err(BackendError::Config("offline LLM backend: request missing from cache".into()))
    }
}

/// One transcript rule: conversations whose first user message contains
/// `match` (or any conversation when `match` is absent) are answered with
/// `responses[round]`, where `round` counts the assistant turns already in
/// the conversation. Rounds past the end repeat the last response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEntry {
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    pub responses: Vec<String>,
}

/// Transcript-driven mock. Rules are tried in file order and the first hit
/// answers.
pub struct ScriptedLlm {
    model_id: String,
    temperature: f64,
    entries: Vec<TranscriptEntry>,
    delay: Duration,
    fail_after: Option<usize>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl ScriptedLlm {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        ScriptedLlm {
            model_id: "scripted-mock".into(),
            temperature: 0.0,
            entries,
            delay: Duration::ZERO,
            fail_after: None,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    /// Answer every conversation with `responses`, round by round.
    pub fn sequence<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self::new(vec![TranscriptEntry {
            pattern: None,
            responses: responses.into_iter().map(Into::into).collect(),
        }])
    }

    /// Line-delimited [`TranscriptEntry`] records.
    pub fn from_file(path: &Path) -> Result<Self> {
        let entries: Vec<TranscriptEntry> = crate::io::read_jsonl(path)?.into_iter().map(|(_, e)| e).collect();
        if entries.iter().any(|e| e.responses.is_empty()) {
            return Err(Error::Config(format!(
                "{}: transcript entry without responses",
                path.display()
            )));
        }
        Ok(Self::new(entries))
    }

    pub fn with_model_id(mut self, id: impl Into<String>) -> Self {
        self.model_id = id.into();
        self
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    /// Fail with a transport error on every call after the first `n`.
    pub fn failing_after(mut self, n: usize) -> Self {
        self.fail_after = Some(n);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Largest number of concurrently executing calls observed.
    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    fn answer(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let first_user = messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let round = messages.iter().filter(|m| m.role == Role::Assistant).count();
        let entry = self
            .entries
            .iter()
            .find(|e| e.pattern.as_deref().is_none_or(|p| first_user.contains(p)))
            .ok_or_else(|| BackendError::Protocol("no transcript entry matches the conversation".into()))?;
        let idx = round.min(entry.responses.len() - 1);
        Ok(entry.responses[idx].clone())
    }
}

impl LlmBackend for ScriptedLlm {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn temperature(&self) -> f64 {
        self.temperature
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if self.fail_after.is_some_and(|limit| n >= limit) {
            return Err(BackendError::Transport(format!("scripted failure on call {}", n + 1)));
        }
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let out = self.answer(messages);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        out
    }
}

pub type ChatCache = RecordCache<String>;

/// Cache key: hash of model id, temperature and the full message list.
pub fn chat_key(model_id: &str, temperature: f64, messages: &[ChatMessage]) -> String {
    let body = serde_json::to_vec(messages).expect("messages serialize");
    content_key([
        b"chat".as_slice(),
        model_id.as_bytes(),
        &temperature.to_bits().to_le_bytes(),
        &body,
    ])
}

/// Serves repeated conversations from a [`ChatCache`].
pub struct CachedLlm<'a> {
    backend: &'a dyn LlmBackend,
    cache: Arc<ChatCache>,
    misses: AtomicUsize,
}

impl<'a> CachedLlm<'a> {
    pub fn new(backend: &'a dyn LlmBackend, cache: Arc<ChatCache>) -> Self {
        CachedLlm {
            backend,
            cache,
            misses: AtomicUsize::new(0),
        }
    }

    pub fn backend(&self) -> &dyn LlmBackend {
        self.backend
    }

    /// Requests that had to go to the backend.
    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::SeqCst)
    }

    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let key = chat_key(self.backend.model_id(), self.backend.temperature(), messages);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let reply = self.backend.complete(messages)?;
        self.cache
            .insert(key, reply.clone())
            .map_err(|e| BackendError::Config(format!("cache write failed: {e}")))?;
        Ok(reply)
    }
}

pub fn load_text_asset(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
