//! Answer synthesis over the contexts that survived reranking.

use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, Role};
use crate::prompts::{PromptSet, QUERY_PLACEHOLDER};
use crate::rerank::{format_context_block, render_choice_prompt, RerankError};

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("generation template error: {0}")]
    Template(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    /// Soft limit on the numbered context block, in characters. Going
    /// over produces a warning, never truncation: silently clipping
    /// evidence would corrupt the comparison between strategies.
    #[serde(default)]
    pub max_context_chars: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedAnswer {
    pub text: String,
    /// Unicode scalar count of the raw answer text; the numerator of
    /// the characters-per-second metric.
    pub chars: usize,
    /// True when the answer was grounded in at least one context.
    pub used_context: bool,
    pub warnings: Vec<String>,
}

/// Synthesizes an answer from the question and its selected contexts
/// with a single generator call. With no contexts (nothing retrieved or
/// nothing survived the relevance floor) the no-context template is used
/// instead, which tells the model to answer from general knowledge and
/// say so.
pub fn synthesize_answer(
    gateway: &Gateway,
    prompts: &PromptSet,
    query: &str,
    contexts: &[String],
    cfg: &GenerationConfig,
) -> Result<GeneratedAnswer, GenerateError> {
    let mut warnings = Vec::new();
    let prompt = if contexts.is_empty() {
        if !prompts.generation_no_context.contains(QUERY_PLACEHOLDER) {
            return Err(GenerateError::Template(format!(
                "no-context template lacks {QUERY_PLACEHOLDER}"
            )));
        }
        prompts.generation_no_context.replace(QUERY_PLACEHOLDER, query)
    } else {
        if let Some(budget) = cfg.max_context_chars {
            let block_chars = format_context_block(contexts).chars().count();
            if block_chars > budget {
                warnings.push(format!(
                    "context block is {block_chars} chars, over the {budget} budget; sending in full"
                ));
            }
        }
        render_choice_prompt(&prompts.generation, contexts, query).map_err(|e| match e {
            RerankError::Template(msg) => GenerateError::Template(msg),
            other => GenerateError::Template(other.to_string()),
        })?
    };
    let response = gateway.complete_text(Role::Generator, &prompt)?;
    Ok(GeneratedAnswer {
        chars: response.chars,
        text: response.text,
        used_context: !contexts.is_empty(),
        warnings,
    })
}
