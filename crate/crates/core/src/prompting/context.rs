use crate::corpus::Sample;
use crate::embedding::{cosine, top_k, EmbeddingVector, Encoder};
use crate::error::Result;
use crate::prompting::{HumanPrompt, PromptBank};
use crate::scalar::Scalar;

pub const DEFAULT_HEAD_PROMPT: &str = include_str!("../../assets/head_prompt.txt");

/// `Context: <text>; Image: <caption>; Answer:` with the answer left blank.
pub fn query_block(text: &str, caption: &str) -> String {
    format!("Context: {text}; Image: {caption}; Answer:")
}

pub fn exemplar_block(p: &HumanPrompt) -> String {
    format!(
        "Context: {}; Image: {}; Answer: {}; Knowledge: {}",
        p.text, p.caption, p.answer_k1, p.justification_k2
    )
}

/// The in-context prompt for one sample.
#[derive(Debug, Clone)]
pub struct PromptContext<S> {
    pub head: String,
    /// Most similar first.
    pub exemplars: Vec<HumanPrompt>,
    pub exemplar_indices: Vec<usize>,
    pub similarities: Vec<S>,
    pub query_block: String,
    pub query_embedding: EmbeddingVector<S>,
}

impl<S: Scalar> PromptContext<S> {
    /// Head, exemplars and query block separated by blank lines.
    pub fn render(&self) -> String {
        let mut parts = vec![self.head.trim_end().to_string()];
        parts.extend(self.exemplars.iter().map(exemplar_block));
        parts.push(self.query_block.clone());
        parts.join("\n\n")
    }
}

/// Pick the `k` bank prompts closest to the sample's fused encoding and lay
/// them out ahead of the sample's query block.
pub fn assemble_context<S: Scalar>(
    head: &str,
    bank: &PromptBank<S>,
    query: &Sample,
    k: usize,
    encoder: &Encoder<'_, S>,
) -> Result<PromptContext<S>> {
    let q = encoder.embed_fused(&query.text, &query.caption)?;
    let bank_vecs = bank.embeddings(encoder)?;
    let idx = top_k(&q, bank_vecs, k)?;
    let similarities = idx.iter().map(|&i| cosine(&q, &bank_vecs[i])).collect::<Result<Vec<S>>>()?;
    Ok(PromptContext {
        head: head.to_string(),
        exemplars: idx.iter().map(|&i| bank.prompts()[i].clone()).collect(),
        exemplar_indices: idx,
        similarities,
        query_block: query_block(&query.text, &query.caption),
        query_embedding: q,
    })
}
