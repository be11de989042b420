use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::BackendError;
use crate::llm::{CachedLlm, ChatMessage};
use crate::prompting::PromptContext;
use crate::scalar::Scalar;

pub const DEFAULT_REFLECTION_INSTRUCTION: &str = include_str!("../../assets/reflection_instruction.txt");

/// How reflection rounds see earlier rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionMode {
    /// One conversation carrying every earlier answer and instruction.
    #[default]
    MultiTurn,
    /// Each round restarts from the context plus only the previous answer.
    Fresh,
}

#[derive(Debug, Clone)]
pub struct ReflectionConfig {
    pub rounds: usize,
    pub mode: ReflectionMode,
    pub instruction: String,
    /// Character budget for the conversation; oldest reflection turns are
    /// dropped first. The initial prompt and the latest exchange are kept.
    pub history_budget: Option<usize>,
}

impl Default for ReflectionConfig {
    fn default() -> Self {
        ReflectionConfig {
            rounds: 2,
            mode: ReflectionMode::MultiTurn,
            instruction: DEFAULT_REFLECTION_INSTRUCTION.trim().to_string(),
            history_budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeCandidate<S> {
    /// 0 is the initial answer, 1..=N the reflections.
    pub round: usize,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector<S>>,
}

impl<S> KnowledgeCandidate<S> {
    pub fn new(round: usize, text: impl Into<String>) -> Self {
        KnowledgeCandidate {
            round,
            response_text: text.into(),
            embedding: None,
        }
    }
}

/// A reflection chain stopped early. `completed` holds the rounds that did
/// finish; their exchanges are already in the cache.
#[derive(Debug, thiserror::Error)]
#[error("reflection stopped after {} round(s): {source}", completed.len())]
pub struct ReflectionError<S: std::fmt::Debug> {
    pub completed: Vec<KnowledgeCandidate<S>>,
    #[source]
    pub source: BackendError,
}

fn chars(messages: &[ChatMessage]) -> usize {
    messages.iter().map(|m| m.content.chars().count()).sum()
}

fn truncate_history(messages: &mut Vec<ChatMessage>, budget: usize) {
    // Layout: [prompt, (assistant, user)*]; keep the prompt and the newest pair.
    while chars(messages) > budget && messages.len() > 3 {
        messages.drain(1..3);
    }
}

/// The conversation sent for `round`, built from the answers of earlier rounds.
pub fn conversation_for_round(prompt: &str, answers: &[String], cfg: &ReflectionConfig) -> Vec<ChatMessage> {
    let mut messages = vec![ChatMessage::user(prompt)];
    let history: &[String] = match cfg.mode {
        ReflectionMode::MultiTurn => answers,
        ReflectionMode::Fresh => &answers[answers.len().saturating_sub(1)..],
    };
    for a in history {
        messages.push(ChatMessage::assistant(a.clone()));
        messages.push(ChatMessage::user(cfg.instruction.clone()));
    }
    if let Some(budget) = cfg.history_budget {
        truncate_history(&mut messages, budget);
    }
    messages
}

/// Query the model with the assembled context, then ask it `cfg.rounds`
/// times to check and repeat or correct its previous answer. Returns
/// `rounds + 1` candidates in round order.
pub fn generate_with_reflection<S: Scalar>(
    context: &PromptContext<S>,
    cfg: &ReflectionConfig,
    llm: &CachedLlm<'_>,
) -> Result<Vec<KnowledgeCandidate<S>>, ReflectionError<S>> {
    let prompt = context.render();
    let mut answers: Vec<String> = Vec::with_capacity(cfg.rounds + 1);
    let mut out = Vec::with_capacity(cfg.rounds + 1);
    for round in 0..=cfg.rounds {
        let messages = conversation_for_round(&prompt, &answers, cfg);
        match llm.complete(&messages) {
            Ok(reply) => {
                out.push(KnowledgeCandidate::new(round, reply.clone()));
                answers.push(reply);
            }
            Err(source) => return Err(ReflectionError { completed: out, source }),
        }
    }
    Ok(out)
}
