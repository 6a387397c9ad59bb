//! Prompt assets embedded in the binary, with file-based overrides.
//!
//! Reranking prompt templates mark where candidate documents and the
//! question get spliced in with `{context_str}` and `{query_str}`; the
//! prompt-generator meta templates instead carry a single `[USER QUERY]`
//! marker and any `{context_str}`/`{query_str}` occurrences inside them
//! are instructional content for the second turn, not substitution
//! points. Judge templates use their own named placeholders.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Marker replaced with the numbered candidate documents.
pub const CONTEXT_PLACEHOLDER: &str = "{context_str}";
/// Marker replaced with the user's question.
pub const QUERY_PLACEHOLDER: &str = "{query_str}";
/// Marker in meta templates replaced with the user's query verbatim.
pub const USER_QUERY_PLACEHOLDER: &str = "[USER QUERY]";

/// The full set of prompt templates the engine uses. [`Default`] yields
/// the embedded assets; individual templates can be overridden from
/// files via [`PromptSet::with_overrides`].
#[derive(Debug, Clone)]
pub struct PromptSet {
    /// Fixed multi-criteria reranking prompt (relevance 0-10 plus five
    /// secondary properties at 0-5, combined as final score in-prompt).
    pub one_turn: String,
    /// Meta prompt whose completion is a query-specific multi-criteria
    /// reranking prompt.
    pub two_turn_meta: String,
    /// Meta prompt ablation: generates a query-specific prompt that
    /// scores relevance only.
    pub two_turn_relevance_only_meta: String,
    /// Single-turn relevance-only reranking prompt.
    pub llm_relevance: String,
    /// Hypothetical-answer query transform.
    pub hyde: String,
    /// Answer synthesis over retrieved contexts.
    pub generation: String,
    /// Answer synthesis when no contexts survived reranking.
    pub generation_no_context: String,
    /// Judge: 0-5 similarity of generated answer to reference.
    pub answer_similarity: String,
    /// Judge: binary relevance of one context to the question.
    pub retrieval_precision: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            one_turn: include_str!("../assets/prompts/rebel_one_turn.txt").to_string(),
            two_turn_meta: include_str!("../assets/prompts/rebel_two_turn_meta.txt").to_string(),
            two_turn_relevance_only_meta: include_str!(
                "../assets/prompts/two_turn_relevance_only_meta.txt"
            )
            .to_string(),
            llm_relevance: include_str!("../assets/prompts/llm_relevance_rerank.txt").to_string(),
            hyde: include_str!("../assets/prompts/hyde.txt").to_string(),
            generation: include_str!("../assets/prompts/generation.txt").to_string(),
            generation_no_context: include_str!("../assets/prompts/generation_no_context.txt")
                .to_string(),
            answer_similarity: include_str!("../assets/prompts/answer_similarity.txt").to_string(),
            retrieval_precision: include_str!("../assets/prompts/retrieval_precision.txt")
                .to_string(),
        }
    }
}

/// Optional per-template file overrides, as they appear in experiment
/// configs.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct PromptOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one_turn: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_turn_meta: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_turn_relevance_only_meta: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_relevance: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyde: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_no_context: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_similarity: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_precision: Option<PathBuf>,
}

impl PromptOverrides {
    pub fn is_empty(&self) -> bool {
        self == &PromptOverrides::default()
    }
}

impl PromptSet {
    /// Embedded defaults with any overridden templates read from disk.
    pub fn with_overrides(overrides: &PromptOverrides) -> io::Result<PromptSet> {
        let mut set = PromptSet::default();
        let slots: [(&Option<PathBuf>, &mut String); 9] = [
            (&overrides.one_turn, &mut set.one_turn),
            (&overrides.two_turn_meta, &mut set.two_turn_meta),
            (
                &overrides.two_turn_relevance_only_meta,
                &mut set.two_turn_relevance_only_meta,
            ),
            (&overrides.llm_relevance, &mut set.llm_relevance),
            (&overrides.hyde, &mut set.hyde),
            (&overrides.generation, &mut set.generation),
            (
                &overrides.generation_no_context,
                &mut set.generation_no_context,
            ),
            (&overrides.answer_similarity, &mut set.answer_similarity),
            (&overrides.retrieval_precision, &mut set.retrieval_precision),
        ];
        for (path, slot) in slots {
            if let Some(path) = path {
                *slot = fs::read_to_string(path).map_err(|e| {
                    io::Error::new(e.kind(), format!("{}: {e}", path.display()))
                })?;
            }
        }
        Ok(set)
    }

    /// SHA-256 of every template, keyed by template name; recorded in
    /// report provenance so results are traceable to exact prompt text.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        for (name, text) in [
            ("one_turn", &self.one_turn),
            ("two_turn_meta", &self.two_turn_meta),
            (
                "two_turn_relevance_only_meta",
                &self.two_turn_relevance_only_meta,
            ),
            ("llm_relevance", &self.llm_relevance),
            ("hyde", &self.hyde),
            ("generation", &self.generation),
            ("generation_no_context", &self.generation_no_context),
            ("answer_similarity", &self.answer_similarity),
            ("retrieval_precision", &self.retrieval_precision),
        ] {
            out.insert(name.to_string(), sha256_hex(text));
        }
        out
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}
