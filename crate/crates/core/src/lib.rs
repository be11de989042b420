//! Few-shot multimodal entity-relation extraction: corpus handling,
//! distribution-matched sampling, retrieval-augmented knowledge prompting,
//! stage-2 templates and scoring.
//!
//! Numeric code is generic over [`Scalar`] (or [`Field`] where exact
//! rationals make sense); the aliases below fix it to `f64`.

pub mod cache;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod generation;
pub mod http;
pub mod io;
pub mod llm;
pub mod pipeline;
pub mod prompting;
pub mod sampler;
pub mod scalar;
pub mod templates;

pub use corpus::{load_corpus, Corpus, Quintuple, Sample, Schema};
pub use error::{BackendError, Error, Result};
pub use eval::{score, MacroMode};
pub use pipeline::RunConfig;
pub use sampler::{sample_few_shot, SplitSpec};
pub use scalar::{Field, Scalar};

pub type Embedding = embedding::EmbeddingVector<f64>;
pub type Report = eval::ScoreReport<f64>;
pub type Knowledge = prompting::SelectedKnowledge<f64>;
pub type Candidate = prompting::KnowledgeCandidate<f64>;
pub type Bank = prompting::PromptBank<f64>;
pub type RelationDistribution = corpus::Distribution<f64>;
