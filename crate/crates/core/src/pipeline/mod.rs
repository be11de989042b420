//! Stage orchestration, run configuration and manifests.

mod config;
mod manifest;
mod runner;
mod stages;

pub use config::{
    Assets, EmbeddingConfig, EmbeddingKind, GenerationConfig, GenerationKind, HttpSettings, LlmConfig, LlmKind, RunConfig,
    EMBED_API_KEY_ENV, LLM_API_KEY_ENV,
};
pub use manifest::{RunManifest, StageRecord, StageStatus};
pub use runner::{
    predict_files, prepare_files, run_all, score_files, stage1_files, write_score, KNOWLEDGE_FILE, MANIFEST_FILE,
    PREDICTIONS_FILE, SCORE_JSON_FILE, SCORE_TEXT_FILE, STAGE2_FILE,
};
pub use stages::{run_predict, run_score, run_stage1, run_stage2_prepare, Predictions, Stage1Backends};
