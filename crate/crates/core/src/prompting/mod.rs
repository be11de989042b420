//! Exemplar bank, in-context prompt assembly, the reflection loop and the
//! knowledge selector.

mod bank;
mod context;
mod reflection;
mod selector;

pub use bank::{load_prompt_bank, HumanPrompt, PromptBank};
pub use context::{assemble_context, exemplar_block, query_block, PromptContext, DEFAULT_HEAD_PROMPT};
pub use reflection::{
    conversation_for_round, generate_with_reflection, KnowledgeCandidate, ReflectionConfig, ReflectionError, ReflectionMode,
    DEFAULT_REFLECTION_INSTRUCTION,
};
pub use selector::{select_knowledge, BoilerplateFilter, SelectedKnowledge, SelectorConfig, DEFAULT_BOILERPLATE_PATTERNS};
