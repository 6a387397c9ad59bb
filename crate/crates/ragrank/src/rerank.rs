//! Context reranking strategies.
//!
//! The strategies of interest score each candidate on relevance (0-10)
//! plus five secondary properties (0-5 each): depth of content,
//! diversity of perspectives, clarity and specificity,
//! authoritativeness, and recency. The final score is
//! `relevance + sum(0.5 * property_i)`, candidates with relevance below
//! 3 are discarded, and the model reports survivors best-first as
//! `Doc: <number>, Relevance: <score>` lines where the reported value is
//! the final score. All of that arithmetic happens inside the model; the
//! engine's job is to render the prompt, parse the ranked listing, and
//! keep the top `top_n` survivors.
//!
//! Two variants exist: one-turn, which uses a fixed prompt embedding the
//! criteria, and two-turn, which first asks a prompt-generator model to
//! write a query-specific reranking prompt (choosing criteria suited to
//! the query) and then reranks with that. Baselines: relevance-only LLM
//! reranking (one- and two-turn), maximal marginal relevance over
//! embeddings, a remote cross-encoder endpoint, and no reranking at all.
//!
//! [`composite_score`] reproduces the in-prompt formula so tests and
//! diagnostics can check model arithmetic; the engine never recomputes
//! final scores from per-criterion values during a run because the
//! models only report totals.

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, RerankBackend, RetryPolicy, Role};
use crate::index::{cosine_similarity, IndexError};
use crate::prompts::{PromptSet, CONTEXT_PLACEHOLDER, QUERY_PLACEHOLDER, USER_QUERY_PLACEHOLDER};

/// Weight applied to every secondary criterion in the final score.
pub const SECONDARY_WEIGHT: f64 = 0.5;
/// Relevance is scored 0-10.
pub const RELEVANCE_MAX: f64 = 10.0;
/// Secondary criteria are scored 0-5.
pub const SECONDARY_MAX: f64 = 5.0;
/// Candidates with relevance below this are discarded in-prompt.
pub const RELEVANCE_FLOOR: f64 = 3.0;
/// Contexts kept for generation unless a strategy overrides it.
pub const DEFAULT_TOP_N: usize = 3;

/// The five secondary criteria of the fixed one-turn prompt.
pub const SECONDARY_CRITERIA: [&str; 5] = [
    "depth_of_content",
    "diversity_of_perspectives",
    "clarity_and_specificity",
    "authoritativeness",
    "recency",
];

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("prompt template error: {0}")]
    Template(String),
    #[error("score out of range: {0}")]
    ScoreRange(String),
    #[error("weights name unknown criterion {0:?}")]
    UnknownCriterion(String),
    #[error("mmr lambda {0} is outside [0, 1]")]
    BadLambda(f64),
    #[error("{candidates} candidates but {scores} retrieval scores")]
    ScoreCountMismatch { candidates: usize, scores: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

// --- scoring ---

/// Final score for one candidate:
/// `relevance + sum(weights[c] * secondary[c])`.
///
/// Every weighted criterion must be present in `secondary`; secondary
/// entries without a weight contribute nothing. Ranges are validated
/// (relevance 0-10, secondary 0-5, weights finite and nonnegative).
pub fn composite_score(
    relevance: f64,
    secondary: &IndexMap<String, f64>,
    weights: &IndexMap<String, f64>,
) -> Result<f64, RerankError> {
    if !relevance.is_finite() || !(0.0..=RELEVANCE_MAX).contains(&relevance) {
        return Err(RerankError::ScoreRange(format!(
            "relevance {relevance} not in [0, {RELEVANCE_MAX}]"
        )));
    }
    for (name, value) in secondary {
        if !value.is_finite() || !(0.0..=SECONDARY_MAX).contains(value) {
            return Err(RerankError::ScoreRange(format!(
                "criterion {name:?} score {value} not in [0, {SECONDARY_MAX}]"
            )));
        }
    }
    let mut total = relevance;
    for (name, weight) in weights {
        if !weight.is_finite() || *weight < 0.0 {
            return Err(RerankError::ScoreRange(format!(
                "weight for {name:?} is {weight}"
            )));
        }
        let value = secondary
            .get(name)
            .ok_or_else(|| RerankError::UnknownCriterion(name.clone()))?;
        total += weight * value;
    }
    Ok(total)
}

/// The standard weight map: all five secondary criteria at 0.5.
pub fn default_weights() -> IndexMap<String, f64> {
    SECONDARY_CRITERIA
        .iter()
        .map(|name| (name.to_string(), SECONDARY_WEIGHT))
        .collect()
}

// --- ranked output grammar ---

/// One line of a model's ranked listing: 1-based candidate number and
/// the reported final score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub doc: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutcome {
    pub ranking: Vec<RankedCandidate>,
    pub warnings: Vec<String>,
}

fn ranking_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*Doc\s*:\s*(\d+)\s*,\s*Relevance\s*:\s*(-?\d+(?:\.\d+)?)\s*$").unwrap()
    })
}

/// Parses `Doc: <int>, Relevance: <number>` lines into a ranking.
///
/// Whitespace is lenient and scores may be decimals. Candidate numbers
/// outside `1..=num_candidates` and repeated numbers (first mention
/// wins) are dropped with warnings. Lines that are not ranking lines are
/// skipped; if the text is nonempty but yields no ranking at all, that
/// is one warning. Whitespace-only text is a legitimate empty ranking
/// (no candidate met the relevance floor) and warns about nothing.
/// Output is sorted by score descending, preserving the model's order
/// for equal scores.
pub fn parse_rerank_output(text: &str, num_candidates: usize) -> ParseOutcome {
    let mut out = ParseOutcome::default();
    if text.trim().is_empty() {
        return out;
    }
    let mut seen = vec![false; num_candidates];
    for line in text.lines() {
        let Some(caps) = ranking_line_re().captures(line) else {
            continue;
        };
        let doc: usize = match caps[1].parse() {
            Ok(d) => d,
            Err(_) => {
                out.warnings
                    .push(format!("unparseable candidate number in line {line:?}"));
                continue;
            }
        };
        let score: f64 = caps[2].parse().expect("regex guarantees a number");
        if doc == 0 || doc > num_candidates {
            out.warnings.push(format!(
                "dropped candidate {doc}: out of range for {num_candidates} candidates"
            ));
            continue;
        }
        if seen[doc - 1] {
            out.warnings
                .push(format!("dropped repeated candidate {doc}"));
            continue;
        }
        seen[doc - 1] = true;
        out.ranking.push(RankedCandidate { doc, score });
    }
    if out.ranking.is_empty() {
        out.warnings
            .push("reranker output contained no ranking lines".into());
        return out;
    }
    out.ranking.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("parsed scores are finite")
    });
    out
}

/// Inverse of [`parse_rerank_output`] for well-formed rankings; used to
/// test the parser by round-tripping.
pub fn format_ranking(ranking: &[RankedCandidate]) -> String {
    let lines: Vec<String> = ranking
        .iter()
        .map(|r| format!("Doc: {}, Relevance: {}", r.doc, r.score))
        .collect();
    lines.join("\n")
}

// --- prompt rendering ---

/// Joins candidate texts into the numbered-document block the reranking
/// prompts describe.
pub fn format_context_block(contexts: &[String]) -> String {
    let blocks: Vec<String> = contexts
        .iter()
        .enumerate()
        .map(|(i, text)| format!("Document {}:\n{}", i + 1, text))
        .collect();
    blocks.join("\n\n")
}

/// Substitutes the numbered candidate block and the question into a
/// choice-select template.
///
/// Substitution points are the last occurrence of `{context_str}` and of
/// `{query_str}`, located on the template before anything is inserted,
/// so marker-like text inside candidate documents or the question is
/// never treated as a substitution point. Both markers must be present.
pub fn render_choice_prompt(
    template: &str,
    contexts: &[String],
    query: &str,
) -> Result<String, RerankError> {
    let ctx_pos = template.rfind(CONTEXT_PLACEHOLDER).ok_or_else(|| {
        RerankError::Template(format!("template lacks {CONTEXT_PLACEHOLDER}"))
    })?;
    let query_pos = template.rfind(QUERY_PLACEHOLDER).ok_or_else(|| {
        RerankError::Template(format!("template lacks {QUERY_PLACEHOLDER}"))
    })?;
    let context_block = format_context_block(contexts);
    // Apply the later replacement first so the earlier offset stays valid.
    let mut spans = [
        (ctx_pos, CONTEXT_PLACEHOLDER.len(), context_block.as_str()),
        (query_pos, QUERY_PLACEHOLDER.len(), query),
    ];
    spans.sort_by_key(|s| std::cmp::Reverse(s.0));
    let mut rendered = template.to_string();
    for (pos, len, replacement) in spans {
        rendered.replace_range(pos..pos + len, replacement);
    }
    Ok(rendered)
}

// --- strategy outcomes ---

/// What a reranking strategy produced for one question.
#[derive(Debug, Clone, Default)]
pub struct RerankOutcome {
    /// Final order: 1-based indices into the candidate list, best first,
    /// at most `top_n` long, with the score backing each position.
    pub ranking: Vec<RankedCandidate>,
    /// Raw text of the ranking reply, when a model produced one.
    pub raw_output: Option<String>,
    /// The query-specific prompt a two-turn strategy generated, when it
    /// was usable.
    pub generated_prompt: Option<String>,
    pub warnings: Vec<String>,
    /// True when model output was unusable and the engine fell back to
    /// retrieval order (or to the fixed template, for two-turn prompt
    /// generation).
    pub fallback_used: bool,
    /// Chat completions spent on reranking for this question.
    pub llm_calls: u32,
}

impl RerankOutcome {
    fn passthrough(n: usize, retrieval_scores: &[f64]) -> Self {
        RerankOutcome {
            ranking: retrieval_scores
                .iter()
                .take(n)
                .enumerate()
                .map(|(i, score)| RankedCandidate {
                    doc: i + 1,
                    score: *score,
                })
                .collect(),
            ..Default::default()
        }
    }
}

fn check_scores(contexts: &[String], retrieval_scores: &[f64]) -> Result<(), RerankError> {
    if contexts.len() != retrieval_scores.len() {
        return Err(RerankError::ScoreCountMismatch {
            candidates: contexts.len(),
            scores: retrieval_scores.len(),
        });
    }
    Ok(())
}

/// Shared engine for every single-call choice-select strategy: render,
/// complete, parse, and re-ask once if the reply was nonempty but
/// unusable. A second unusable reply falls back to the top `top_n`
/// candidates in retrieval order. An empty reply is honored as "nothing
/// met the relevance floor".
fn choice_rerank(
    gateway: &Gateway,
    template: &str,
    query: &str,
    contexts: &[String],
    top_n: usize,
    retrieval_scores: &[f64],
) -> Result<RerankOutcome, RerankError> {
    check_scores(contexts, retrieval_scores)?;
    let mut outcome = RerankOutcome::default();
    if contexts.is_empty() {
        return Ok(outcome);
    }
    let prompt = render_choice_prompt(template, contexts, query)?;
    for attempt in 0..2 {
        let response = gateway.complete_text(Role::Reranker, &prompt)?;
        outcome.llm_calls += 1;
        let parsed = parse_rerank_output(&response.text, contexts.len());
        let empty_reply = response.text.trim().is_empty();
        outcome.raw_output = Some(response.text);
        if !parsed.ranking.is_empty() || empty_reply {
            outcome.warnings.extend(parsed.warnings);
            outcome.ranking = parsed.ranking;
            outcome.ranking.truncate(top_n);
            return Ok(outcome);
        }
        if attempt == 0 {
            outcome
                .warnings
                .push("reranker reply was unusable; asking again".into());
        } else {
            outcome.warnings.extend(parsed.warnings);
        }
    }
    outcome
        .warnings
        .push("reranker replies unusable twice; falling back to retrieval order".into());
    outcome.fallback_used = true;
    outcome.ranking = retrieval_scores
        .iter()
        .take(top_n)
        .enumerate()
        .map(|(i, score)| RankedCandidate {
            doc: i + 1,
            score: *score,
        })
        .collect();
    Ok(outcome)
}

/// One-turn multi-criteria reranking with the fixed prompt.
pub fn rerank_one_turn(
    gateway: &Gateway,
    prompts: &PromptSet,
    query: &str,
    contexts: &[String],
    top_n: usize,
    retrieval_scores: &[f64],
) -> Result<RerankOutcome, RerankError> {
    choice_rerank(
        gateway,
        &prompts.one_turn,
        query,
        contexts,
        top_n,
        retrieval_scores,
    )
}

/// Relevance-only LLM reranking; the classic choice-select baseline.
pub fn rerank_llm_relevance(
    gateway: &Gateway,
    prompts: &PromptSet,
    query: &str,
    contexts: &[String],
    top_n: usize,
    retrieval_scores: &[f64],
) -> Result<RerankOutcome, RerankError> {
    choice_rerank(
        gateway,
        &prompts.llm_relevance,
        query,
        contexts,
        top_n,
        retrieval_scores,
    )
}

/// A generated query-specific reranking prompt, or word that generation
/// failed and the caller should use its fixed template.
#[derive(Debug, Clone)]
pub struct GeneratedPrompt {
    pub text: String,
    pub fell_back: bool,
    pub llm_calls: u32,
    pub warnings: Vec<String>,
}

/// A usable generated prompt must end in the mandated example-format
/// block: it needs the literal `Example format:` marker and both
/// substitution placeholders for the second turn.
pub fn valid_generated_prompt(text: &str) -> bool {
    text.contains("Example format:")
        && text.contains(CONTEXT_PLACEHOLDER)
        && text.contains(QUERY_PLACEHOLDER)
}

/// First turn of the two-turn strategies: substitutes the user's query
/// into the meta template at `[USER QUERY]` and asks the
/// prompt-generator role for a query-specific reranking prompt. An
/// unusable completion (missing the example block or placeholders) is
/// re-asked once; two failures flag `fell_back` so the caller reranks
/// with its fixed template instead.
pub fn generate_rerank_prompt(
    gateway: &Gateway,
    meta_template: &str,
    query: &str,
) -> Result<GeneratedPrompt, RerankError> {
    if !meta_template.contains(USER_QUERY_PLACEHOLDER) {
        return Err(RerankError::Template(format!(
            "meta template lacks {USER_QUERY_PLACEHOLDER}"
        )));
    }
    let prompt = meta_template.replace(USER_QUERY_PLACEHOLDER, query);
    let mut warnings = Vec::new();
    for attempt in 0..2u32 {
        let response = gateway.complete_text(Role::PromptGenerator, &prompt)?;
        if valid_generated_prompt(&response.text) {
            return Ok(GeneratedPrompt {
                text: response.text,
                fell_back: false,
                llm_calls: attempt + 1,
                warnings,
            });
        }
        warnings.push(if attempt == 0 {
            "generated prompt lacked the example block; asking again".into()
        } else {
            "generated prompt unusable twice; using the fixed template".into()
        });
    }
    Ok(GeneratedPrompt {
        text: String::new(),
        fell_back: true,
        llm_calls: 2,
        warnings,
    })
}

fn two_turn(
    gateway: &Gateway,
    meta_template: &str,
    fixed_fallback: &str,
    query: &str,
    contexts: &[String],
    top_n: usize,
    retrieval_scores: &[f64],
) -> Result<RerankOutcome, RerankError> {
    check_scores(contexts, retrieval_scores)?;
    if contexts.is_empty() {
        return Ok(RerankOutcome::default());
    }
    let generated = generate_rerank_prompt(gateway, meta_template, query)?;
    let template = if generated.fell_back {
        fixed_fallback
    } else {
        generated.text.as_str()
    };
    let mut outcome = choice_rerank(gateway, template, query, contexts, top_n, retrieval_scores)?;
    outcome.llm_calls += generated.llm_calls;
    outcome.fallback_used |= generated.fell_back;
    if !generated.fell_back {
        outcome.generated_prompt = Some(generated.text);
    }
    let mut warnings = generated.warnings;
    warnings.append(&mut outcome.warnings);
    outcome.warnings = warnings;
    Ok(outcome)
}

/// Two-turn multi-criteria reranking: generate a query-specific prompt,
/// then rerank with it. Exactly two chat calls on the happy path. If
/// prompt generation fails twice, the fixed one-turn prompt reranks
/// instead (three calls total, `fallback_used` set).
pub fn rerank_two_turn(
    gateway: &Gateway,
    prompts: &PromptSet,
    query: &str,
    contexts: &[String],
    top_n: usize,
    retrieval_scores: &[f64],
) -> Result<RerankOutcome, RerankError> {
    two_turn(
        gateway,
        &prompts.two_turn_meta,
        &prompts.one_turn,
        query,
        contexts,
        top_n,
        retrieval_scores,
    )
}

/// Ablation of [`rerank_two_turn`]: the meta prompt asks for a
/// relevance-only reranking prompt, isolating the effect of
/// query-specific prompting from multi-criteria scoring. Falls back to
/// the fixed relevance-only template so the ablation never picks up
/// secondary criteria.
pub fn rerank_two_turn_relevance_only(
    gateway: &Gateway,
    prompts: &PromptSet,
    query: &str,
    contexts: &[String],
    top_n: usize,
    retrieval_scores: &[f64],
) -> Result<RerankOutcome, RerankError> {
    two_turn(
        gateway,
        &prompts.two_turn_relevance_only_meta,
        &prompts.llm_relevance,
        query,
        contexts,
        top_n,
        retrieval_scores,
    )
}

/// Reranks via a remote cross-encoder endpoint. No chat calls are
/// involved; endpoint responses are validated and sorted by the gateway
/// layer.
pub fn rerank_remote(
    backend: &dyn RerankBackend,
    retry: &RetryPolicy,
    query: &str,
    contexts: &[String],
    top_n: usize,
) -> Result<RerankOutcome, RerankError> {
    let results = crate::gateway::remote_rerank(backend, retry, query, contexts, top_n)?;
    Ok(RerankOutcome {
        ranking: results
            .into_iter()
            .map(|r| RankedCandidate {
                doc: r.index + 1,
                score: r.relevance_score,
            })
            .collect(),
        ..Default::default()
    })
}

// --- maximal marginal relevance ---

/// Greedy maximal marginal relevance over embedding vectors.
///
/// The first pick is always the candidate most similar to the query
/// (ties by ascending id); with nothing selected yet there is no
/// redundancy to trade against, so lambda does not apply. Every later
/// pick maximizes `lambda * cos(d, q) - (1 - lambda) * max cos(d, d')`
/// over already-selected `d'`. At `lambda = 1` this reduces to pure
/// relevance order; at `lambda = 0` it picks the least redundant
/// candidates regardless of the query. The score recorded for each pick
/// is its selection-time objective value, so scores are comparable only
/// within a position, not across positions.
pub fn rerank_mmr(
    query: &[f64],
    vectors: &[Vec<f64>],
    ids: &[String],
    lambda: f64,
    top_n: usize,
) -> Result<Vec<RankedCandidate>, RerankError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(RerankError::BadLambda(lambda));
    }
    if vectors.len() != ids.len() {
        return Err(RerankError::ScoreCountMismatch {
            candidates: vectors.len(),
            scores: ids.len(),
        });
    }
    if vectors.is_empty() || top_n == 0 {
        return Ok(Vec::new());
    }
    let n = vectors.len();
    let mut relevance = Vec::with_capacity(n);
    for v in vectors {
        relevance.push(cosine_similarity(query, v)?);
    }
    let mut selected: Vec<usize> = Vec::new();
    let mut picked = vec![false; n];
    let mut ranking = Vec::new();
    while ranking.len() < top_n.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if picked[i] {
                continue;
            }
            let objective = if selected.is_empty() {
                relevance[i]
            } else {
                let mut max_sim = f64::NEG_INFINITY;
                for &j in &selected {
                    let sim = cosine_similarity(&vectors[i], &vectors[j])?;
                    if sim > max_sim {
                        max_sim = sim;
                    }
                }
                lambda * relevance[i] - (1.0 - lambda) * max_sim
            };
            let better = match best {
                None => true,
                Some((bi, bs)) => {
                    objective > bs || (objective == bs && ids[i] < ids[bi])
                }
            };
            if better {
                best = Some((i, objective));
            }
        }
        let (i, objective) = best.expect("unpicked candidates remain");
        picked[i] = true;
        selected.push(i);
        ranking.push(RankedCandidate {
            doc: i + 1,
            score: objective,
        });
    }
    Ok(ranking)
}

// --- strategy selection ---

/// Which reranking pipeline stage to run between retrieval and
/// generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RerankStrategy {
    /// Pass every retrieved context through unranked.
    None,
    /// Single LLM call scoring relevance only.
    LlmRelevance {
        #[serde(default = "default_top_n")]
        top_n: usize,
    },
    /// Single LLM call scoring relevance plus the five fixed secondary
    /// criteria.
    RebelOneTurn {
        #[serde(default = "default_top_n")]
        top_n: usize,
    },
    /// Prompt-generation call, then reranking with the generated
    /// query-specific multi-criteria prompt.
    RebelTwoTurn {
        #[serde(default = "default_top_n")]
        top_n: usize,
    },
    /// Two-turn ablation whose generated prompt scores relevance only.
    TwoTurnRelevanceOnly {
        #[serde(default = "default_top_n")]
        top_n: usize,
    },
    /// Remote cross-encoder endpoint.
    RemoteCrossEncoder {
        #[serde(default = "default_top_n")]
        top_n: usize,
    },
    /// Maximal marginal relevance over the retrieval embeddings.
    Mmr {
        #[serde(default = "default_top_n")]
        top_n: usize,
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
}

fn default_top_n() -> usize {
    DEFAULT_TOP_N
}

fn default_lambda() -> f64 {
    0.5
}

impl RerankStrategy {
    /// How many contexts survive this stage, or `None` when everything
    /// passes through.
    pub fn top_n(&self) -> Option<usize> {
        match self {
            RerankStrategy::None => None,
            RerankStrategy::LlmRelevance { top_n }
            | RerankStrategy::RebelOneTurn { top_n }
            | RerankStrategy::RebelTwoTurn { top_n }
            | RerankStrategy::TwoTurnRelevanceOnly { top_n }
            | RerankStrategy::RemoteCrossEncoder { top_n }
            | RerankStrategy::Mmr { top_n, .. } => Some(*top_n),
        }
    }

    pub fn validate(&self) -> Result<(), RerankError> {
        if let Some(0) = self.top_n() {
            return Err(RerankError::ScoreRange("top_n must be at least 1".into()));
        }
        if let RerankStrategy::Mmr { lambda, .. } = self {
            if !(0.0..=1.0).contains(lambda) {
                return Err(RerankError::BadLambda(*lambda));
            }
        }
        Ok(())
    }
}

/// Pass-through "strategy": keeps all contexts in retrieval order with
/// their retrieval scores, making zero model calls.
pub fn rerank_none(retrieval_scores: &[f64]) -> RerankOutcome {
    RerankOutcome::passthrough(retrieval_scores.len(), retrieval_scores)
}
