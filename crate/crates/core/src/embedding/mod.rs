//! Fused text+caption encoding and cosine top-K selection.

mod backend;
mod encoder;
mod vector;

pub use backend::{EmbeddingBackend, HttpEmbedder, MockEmbedder, OfflineEmbedder, OpenAiEmbedder};
pub use encoder::{fuse, EmbeddingCache, Encoder, FUSION_SEPARATOR};
pub use vector::{cosine, top_k, EmbeddingVector};
