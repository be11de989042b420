use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::embedding::{fuse, EmbeddingVector, Encoder};
use crate::error::{Error, Result};
use crate::io;
use crate::scalar::Scalar;
use crate::templates::{parse_fragments, Fragment, EMPTY_SENTINEL};

/// A hand-annotated exemplar: the post, its gold answer and a
/// background-knowledge justification of that answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanPrompt {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    pub caption: String,
    pub answer_k1: String,
    pub justification_k2: String,
}

impl HumanPrompt {
    pub fn fused_input(&self) -> String {
        fuse(&self.text, &self.caption)
    }
}

fn check_prompt(p: &HumanPrompt) -> std::result::Result<(), String> {
    for (name, v) in [
        ("text", &p.text),
        ("caption", &p.caption),
        ("answer_k1", &p.answer_k1),
        ("justification_k2", &p.justification_k2),
    ] {
        if v.trim().is_empty() {
            return Err(format!("field `{name}`: empty"));
        }
    }
    if p.answer_k1.trim().eq_ignore_ascii_case(EMPTY_SENTINEL) {
        return Ok(());
    }
    let frags = parse_fragments(&p.answer_k1);
    if let Some(Fragment::Unparsed(f)) = frags.iter().find(|f| matches!(f, Fragment::Unparsed(_))) {
        return Err(format!("field `answer_k1`: unparseable fragment {f:?}"));
    }
    if frags.is_empty() {
        return Err("field `answer_k1`: no relation sketch".into());
    }
    Ok(())
}

/// Load a line-delimited prompt bank, preserving file order.
pub fn load_prompt_bank(path: &Path) -> Result<Vec<HumanPrompt>> {
    let records: Vec<(usize, HumanPrompt)> = io::read_jsonl(path)?;
    if records.is_empty() {
        return Err(Error::Invalid(format!("{}: prompt bank is empty", path.display())));
    }
    let mut out = Vec::with_capacity(records.len());
    for (line, p) in records {
        check_prompt(&p).map_err(|m| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: match &p.id {
                Some(id) => format!("prompt {id:?}: {m}"),
                None => format!("prompt at line {line}: {m}"),
            },
        })?;
        out.push(p);
    }
    Ok(out)
}

/// Prompts plus their fused embeddings, computed on first use.
pub struct PromptBank<S> {
    prompts: Vec<HumanPrompt>,
    embeddings: OnceLock<Vec<EmbeddingVector<S>>>,
}

impl<S: Scalar> PromptBank<S> {
    pub fn new(prompts: Vec<HumanPrompt>) -> Result<Self> {
        if prompts.is_empty() {
            return Err(Error::Invalid("prompt bank is empty".into()));
        }
        for p in &prompts {
            check_prompt(p).map_err(Error::Invalid)?;
        }
        Ok(PromptBank {
            prompts,
            embeddings: OnceLock::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(load_prompt_bank(path)?)
    }

    pub fn prompts(&self) -> &[HumanPrompt] {
        &self.prompts
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn embeddings(&self, encoder: &Encoder<'_, S>) -> Result<&[EmbeddingVector<S>]> {
        if let Some(e) = self.embeddings.get() {
            return Ok(e);
        }
        let inputs: Vec<String> = self.prompts.iter().map(HumanPrompt::fused_input).collect();
        let vectors = encoder.embed_texts(&inputs)?;
        Ok(self.embeddings.get_or_init(|| vectors))
    }
}
