use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::Schema;
use crate::embedding::{EmbeddingBackend, HttpEmbedder, MockEmbedder, OfflineEmbedder, OpenAiEmbedder};
use crate::error::{Error, Result};
use crate::eval::MacroMode;
use crate::generation::{EchoGenerator, GenerationBackend, HttpGenerator};
use crate::http::HttpConfig;
use crate::llm::{HttpChat, LlmBackend, OfflineLlm, OpenAiChat, ScriptedLlm};
use crate::prompting::{BoilerplateFilter, ReflectionConfig, ReflectionMode, SelectorConfig, DEFAULT_HEAD_PROMPT};
use crate::templates::{TrainingExample, DEFAULT_MAX_INPUT_LEN};

pub const LLM_API_KEY_ENV: &str = "LLM_API_KEY";
pub const EMBED_API_KEY_ENV: &str = "EMBED_API_KEY";

/// `FromStr` accepting the same names as the config file.
macro_rules! from_str_via_serde {
    ($($t:ty),*) => {$(
        impl std::str::FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                use serde::de::IntoDeserializer;
                <$t>::deserialize(s.into_deserializer()).map_err(|e: serde::de::value::Error| e.to_string())
            }
        }
    )*};
}

from_str_via_serde!(LlmKind, EmbeddingKind, GenerationKind, ReflectionMode, MacroMode);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmKind {
    /// `POST /chat` wire contract.
    Http,
    /// OpenAI-compatible `/v1/chat/completions`.
    Openai,
    /// Transcript-driven mock.
    Scripted,
    /// Cache only.
    Offline,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    pub kind: LlmKind,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default = "default_llm_model")]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
}

fn default_llm_model() -> String {
    "gpt-3.5-turbo".into()
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            kind: LlmKind::Openai,
            endpoint: "https://api.openai.com".into(),
            model: default_llm_model(),
            temperature: 0.0,
            transcript: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Http,
    Openai,
    Mock,
    Offline,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub kind: EmbeddingKind,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub model: String,
    pub dim: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            kind: EmbeddingKind::Mock,
            endpoint: String::new(),
            model: String::new(),
            dim: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationKind {
    /// `POST /generate` wire contract.
    Http,
    /// Replays each example's target.
    Echo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub kind: GenerationKind,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default = "default_gen_model")]
    pub model: String,
    #[serde(default = "default_gen_batch")]
    pub batch_size: usize,
}

fn default_gen_model() -> String {
    "stage2-t5".into()
}

fn default_gen_batch() -> usize {
    6
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            kind: GenerationKind::Http,
            endpoint: "http://127.0.0.1:8000".into(),
            model: default_gen_model(),
            batch_size: default_gen_batch(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpSettings {
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for HttpSettings {
    fn default() -> Self {
        let d = HttpConfig::default();
        HttpSettings {
            timeout_secs: d.timeout.as_secs(),
            retries: d.retries,
            backoff_ms: d.backoff.as_millis() as u64,
        }
    }
}

impl HttpSettings {
    fn to_http(&self) -> HttpConfig {
        HttpConfig {
            timeout: Duration::from_secs(self.timeout_secs),
            retries: self.retries,
            backoff: Duration::from_millis(self.backoff_ms),
        }
    }
}

/// Everything a run needs besides its input files. Loaded from TOML;
/// relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// In-context exemplars per query.
    pub k: usize,
    /// Reflection rounds after the initial answer.
    pub n: usize,
    pub seed: u64,
    pub max_input_len: usize,
    pub concurrency_limit: usize,
    pub embed_batch_size: usize,
    pub cache_dir: PathBuf,
    pub schema: Option<PathBuf>,
    pub head_prompt: Option<PathBuf>,
    pub reflection_instruction: Option<PathBuf>,
    pub boilerplate_patterns: Option<PathBuf>,
    pub reflection_mode: ReflectionMode,
    pub exclude_initial_answer: bool,
    pub history_budget: Option<usize>,
    pub macro_mode: MacroMode,
    pub llm: LlmConfig,
    pub embedding: EmbeddingConfig,
    pub generation: GenerationConfig,
    pub http: HttpSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: 5,
            n: 2,
            seed: 67,
            max_input_len: DEFAULT_MAX_INPUT_LEN,
            concurrency_limit: 4,
            embed_batch_size: 64,
            cache_dir: PathBuf::from("cache"),
            schema: None,
            head_prompt: None,
            reflection_instruction: None,
            boilerplate_patterns: None,
            reflection_mode: ReflectionMode::MultiTurn,
            exclude_initial_answer: false,
            history_budget: None,
            macro_mode: MacroMode::Supported,
            llm: LlmConfig::default(),
            embedding: EmbeddingConfig::default(),
            generation: GenerationConfig::default(),
            http: HttpSettings::default(),
        }
    }
}

/// Text assets and schema resolved from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Assets {
    pub schema: Schema,
    pub head: String,
    pub reflection: ReflectionConfig,
    pub selector: SelectorConfig,
}

fn read_asset(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.check_paths()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.concurrency_limit == 0 {
            return Err(Error::Config("concurrency_limit must be positive".into()));
        }
        if self.embedding.dim == 0 {
            return Err(Error::Config("embedding.dim must be positive".into()));
        }
        if self.generation.batch_size == 0 || self.embed_batch_size == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if self.llm.kind == LlmKind::Scripted && self.llm.transcript.is_none() {
            return Err(Error::Config("llm.kind = \"scripted\" needs llm.transcript".into()));
        }
        Ok(())
    }

    /// Make relative paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.cache_dir);
        for p in [
            &mut self.schema,
            &mut self.head_prompt,
            &mut self.reflection_instruction,
            &mut self.boilerplate_patterns,
            &mut self.llm.transcript,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn check_paths(&self) -> Result<()> {
        for p in [
            &self.schema,
            &self.head_prompt,
            &self.reflection_instruction,
            &self.boilerplate_patterns,
            &self.llm.transcript,
        ]
        .into_iter()
        .flatten()
        {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn assets(&self) -> Result<Assets> {
        let schema = match &self.schema {
            Some(p) => Schema::load(p).map_err(|e| Error::Config(e.to_string()))?,
            None => Schema::default(),
        };
        let head = match &self.head_prompt {
            Some(p) => read_asset(p)?,
            None => DEFAULT_HEAD_PROMPT.to_string(),
        };
        let mut reflection = ReflectionConfig {
            rounds: self.n,
            mode: self.reflection_mode,
            history_budget: self.history_budget,
            ..Default::default()
        };
        if let Some(p) = &self.reflection_instruction {
            reflection.instruction = read_asset(p)?.trim().to_string();
        }
        let boilerplate = match &self.boilerplate_patterns {
            Some(p) => BoilerplateFilter::parse(&read_asset(p)?)?,
            None => BoilerplateFilter::default(),
        };
        Ok(Assets {
            schema,
            head,
            reflection,
            selector: SelectorConfig {
                exclude_initial: self.exclude_initial_answer,
                boilerplate,
            },
        })
    }

    pub fn embedding_cache_path(&self) -> PathBuf {
        self.cache_dir.join("embeddings.jsonl")
    }

    pub fn chat_cache_path(&self) -> PathBuf {
        self.cache_dir.join("chat.jsonl")
    }

    pub fn build_embedder(&self) -> Result<Box<dyn EmbeddingBackend>> {
        let e = &self.embedding;
        let key = std::env::var(EMBED_API_KEY_ENV).ok();
        Ok(match e.kind {
            EmbeddingKind::Mock => Box::new(MockEmbedder::new(e.dim)),
            EmbeddingKind::Offline => Box::new(OfflineEmbedder {
                model_id: if e.model.is_empty() {
                    format!("mock-hash-{}", e.dim)
                } else {
                    e.model.clone()
                },
                dim: e.dim,
            }),
            EmbeddingKind::Http => Box::new(HttpEmbedder::new(&e.endpoint, &e.model, e.dim, key, self.http.to_http())?),
            EmbeddingKind::Openai => Box::new(OpenAiEmbedder::new(&e.endpoint, &e.model, e.dim, key, self.http.to_http())?),
        })
    }

    pub fn build_llm(&self) -> Result<Box<dyn LlmBackend>> {
        let l = &self.llm;
        let key = std::env::var(LLM_API_KEY_ENV).ok();
        Ok(match l.kind {
            LlmKind::Http => Box::new(HttpChat::new(&l.endpoint, &l.model, l.temperature, key, self.http.to_http())?),
            LlmKind::Openai => Box::new(OpenAiChat::new(
                &l.endpoint,
                &l.model,
                l.temperature,
                key,
                self.http.to_http(),
            )?),
            LlmKind::Scripted => {
                let path = l
                    .transcript
                    .as_deref()
                    .ok_or_else(|| Error::Config("missing llm.transcript".into()))?;
                Box::new(ScriptedLlm::from_file(path)?.with_model_id(l.model.clone()))
            }
            LlmKind::Offline => Box::new(OfflineLlm {
                model_id: l.model.clone(),
                temperature: l.temperature,
            }),
        })
    }

    /// `examples` feed the echo mock; the HTTP backend ignores them.
    pub fn build_generator(&self, examples: &[TrainingExample]) -> Result<Box<dyn GenerationBackend>> {
        let g = &self.generation;
        Ok(match g.kind {
            GenerationKind::Http => Box::new(HttpGenerator::new(&g.endpoint, &g.model, self.http.to_http())?),
            GenerationKind::Echo => Box::new(EchoGenerator::from_examples(examples)),
        })
    }
}
