//! The experiment harness: question sets, per-question execution, and
//! the repeated-runs loop.
//!
//! Execution order is canonical: questions outermost, then pipelines,
//! then repetitions 1..=R. Every unit of work appends one JSON line to
//! the results file and flushes, so an interrupted experiment resumes by
//! rerunning with the same arguments; finished (pipeline, question,
//! repetition) keys are skipped. A sidecar `<results>.meta.json` records
//! config and prompt hashes, and resuming refuses to mix results from
//! different configurations.
//!
//! A record never aborts the experiment: any component failure lands in
//! the record's `errors` list, downstream stages are skipped, and
//! aggregation later excludes the record while counting it in an
//! exclusion tally. End-to-end latency covers retrieval, reranking, and
//! generation (plus the hypothetical-answer transform when enabled);
//! judge calls happen after the stopwatch stops because evaluation is
//! not part of answering.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, PipelineSpec, ResolvedBackends};
use crate::eval::{judge_answer_similarity, judge_retrieval_precision};
use crate::gateway::{Clock, EmbeddingBackend, Gateway, RerankBackend, RetryPolicy};
use crate::generate::{synthesize_answer, GenerationConfig};
use crate::index::{embed_texts, hyde_transform, IndexError, VectorIndex};
use crate::prompts::PromptSet;
use crate::rerank::{
    rerank_llm_relevance, rerank_mmr, rerank_none, rerank_one_turn, rerank_remote,
    rerank_two_turn, rerank_two_turn_relevance_only, RerankError, RerankOutcome, RerankStrategy,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid file {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// --- question sets ---

/// A question with its reference answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question_id: String,
    pub question: String,
    pub reference_answer: String,
}

#[derive(Deserialize)]
struct QaEntry {
    #[serde(default)]
    id: Option<String>,
    question: String,
    answer: String,
}

#[derive(Deserialize)]
struct ParallelArrays {
    questions: Vec<String>,
    ground_truths: Vec<String>,
}

/// Loads a question set from JSON. Two shapes are accepted: an array of
/// `{"question", "answer"}` objects (optionally with explicit `"id"`),
/// or `{"questions": [...], "ground_truths": [...]}` parallel arrays.
/// Missing ids are assigned `q0001`, `q0002`, ... in input order.
pub fn load_qa_set(path: &Path) -> Result<Vec<QaPair>, HarnessError> {
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    let format_err = |message: String| HarnessError::Format {
        path: path.to_path_buf(),
        message,
    };
    let value: serde_json::Value =
        serde_json::from_str(&raw).map_err(|e| format_err(e.to_string()))?;
    let pairs: Vec<QaPair> = if value.is_array() {
        let entries: Vec<QaEntry> =
            serde_json::from_value(value).map_err(|e| format_err(e.to_string()))?;
        entries
            .into_iter()
            .enumerate()
            .map(|(i, e)| QaPair {
                question_id: e.id.unwrap_or_else(|| format!("q{:04}", i + 1)),
                question: e.question,
                reference_answer: e.answer,
            })
            .collect()
    } else {
        let arrays: ParallelArrays =
            serde_json::from_value(value).map_err(|e| format_err(e.to_string()))?;
        if arrays.questions.len() != arrays.ground_truths.len() {
            return Err(format_err(format!(
                "{} questions but {} ground_truths",
                arrays.questions.len(),
                arrays.ground_truths.len()
            )));
        }
        arrays
            .questions
            .into_iter()
            .zip(arrays.ground_truths)
            .enumerate()
            .map(|(i, (question, reference_answer))| QaPair {
                question_id: format!("q{:04}", i + 1),
                question,
                reference_answer,
            })
            .collect()
    };
    if pairs.is_empty() {
        return Err(format_err("question set is empty".into()));
    }
    let mut seen = BTreeSet::new();
    for pair in &pairs {
        if pair.question.trim().is_empty() {
            return Err(format_err(format!("question {} is empty", pair.question_id)));
        }
        if pair.reference_answer.trim().is_empty() {
            return Err(format_err(format!(
                "reference answer for {} is empty",
                pair.question_id
            )));
        }
        if !seen.insert(pair.question_id.as_str()) {
            return Err(format_err(format!(
                "duplicate question id {:?}",
                pair.question_id
            )));
        }
    }
    Ok(pairs)
}

// --- run records ---

/// One JSONL line of results: a single (pipeline, question, repetition)
/// execution. Field names are part of the on-disk contract.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub pipeline_id: String,
    pub question_id: String,
    /// 1-based repetition number.
    pub repetition: u32,
    /// 0-5 judged similarity to the reference answer; null when the
    /// record errored before judging.
    pub answer_similarity: Option<f64>,
    /// Fraction of selected contexts judged relevant; null when no
    /// contexts were selected or judged.
    pub retrieval_precision: Option<f64>,
    /// Retrieval + reranking + generation, in seconds. Judging is not
    /// included.
    pub end_to_end_latency_s: f64,
    pub answer_chars: usize,
    /// `answer_chars / end_to_end_latency_s`; 0 when no answer exists.
    pub chars_per_second: f64,
    /// Chat completions the rerank stage spent (0 for pass-through,
    /// mmr, and the remote endpoint; 2 for two-turn on the happy path).
    pub rerank_llm_calls: u32,
    pub fallback_used: bool,
    /// Chunk ids of the contexts given to the generator, in rank order.
    pub contexts_used: Vec<String>,
    pub answer: Option<String>,
    pub warnings: Vec<String>,
    /// Nonempty means the record is excluded from aggregates.
    pub errors: Vec<String>,
}

impl RunRecord {
    pub fn is_excluded(&self) -> bool {
        !self.errors.is_empty()
    }

    pub fn key(&self) -> (String, String, u32) {
        (
            self.pipeline_id.clone(),
            self.question_id.clone(),
            self.repetition,
        )
    }
}

/// Parses a results JSONL file, failing loudly on any malformed line.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RunRecord =
            serde_json::from_str(&line).map_err(|e| HarnessError::Format {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", lineno + 1),
            })?;
        records.push(record);
    }
    Ok(records)
}

// --- single execution ---

/// Everything one question execution needs, borrowed from the
/// experiment.
pub struct QuestionEnv<'a> {
    pub gateway: &'a Gateway,
    pub embedder: &'a dyn EmbeddingBackend,
    pub rerank_endpoint: Option<&'a dyn RerankBackend>,
    pub index: &'a VectorIndex,
    pub prompts: &'a PromptSet,
    pub retry: &'a RetryPolicy,
    pub clock: &'a dyn Clock,
    pub generation: &'a GenerationConfig,
    pub embed_batch: usize,
}

/// A pipeline with its experiment-level settings already folded in.
#[derive(Debug, Clone)]
pub struct PipelineRuntime {
    pub pipeline_id: String,
    pub strategy: RerankStrategy,
    pub retrieval_k: usize,
    pub hyde: bool,
}

impl PipelineRuntime {
    pub fn from_spec(spec: &PipelineSpec, experiment: &ExperimentConfig) -> Self {
        PipelineRuntime {
            pipeline_id: spec.pipeline_id.clone(),
            strategy: spec.strategy.clone(),
            retrieval_k: spec.effective_k(experiment),
            hyde: spec.effective_hyde(experiment),
        }
    }
}

/// Runs one (pipeline, question, repetition) unit end to end. Never
/// fails: every component error is recorded in the result and later
/// stages are skipped. Reranking and generation always see the original
/// question; the hypothetical-answer transform only changes what gets
/// embedded for retrieval.
pub fn run_question(
    env: &QuestionEnv<'_>,
    pipeline: &PipelineRuntime,
    qa: &QaPair,
    repetition: u32,
) -> RunRecord {
    let started = env.clock.now();
    let mut warnings: Vec<String> = Vec::new();
    let mut errors: Vec<String> = Vec::new();
    let mut fallback_used = false;
    let mut rerank_llm_calls = 0u32;

    // Retrieval query, possibly transformed.
    let mut retrieval_query = qa.question.clone();
    if pipeline.hyde {
        match hyde_transform(&qa.question, env.gateway, env.prompts) {
            Ok(outcome) => {
                if outcome.fallback_used {
                    fallback_used = true;
                    warnings.push("hypothetical answer was empty; retrieved with the raw question".into());
                }
                retrieval_query = outcome.text;
            }
            Err(e) => errors.push(format!("hyde: {e}")),
        }
    }

    // Embed and retrieve. The query vector is kept for mmr, which
    // diversifies against the same embedding retrieval scored with.
    let mut contexts = Vec::new();
    let mut query_vec: Vec<f64> = Vec::new();
    if errors.is_empty() {
        let query_texts = vec![retrieval_query];
        match embed_texts(env.embedder, env.retry, &query_texts, env.embed_batch) {
            Ok(mut vectors) => {
                query_vec = vectors.pop().expect("one vector for one text");
                match env.index.retrieve_top_k(&query_vec, pipeline.retrieval_k) {
                    Ok(hits) => contexts = hits,
                    Err(e) => errors.push(format!("retrieve: {e}")),
                }
            }
            Err(e) => errors.push(format!("embed query: {e}")),
        }
        if errors.is_empty() && contexts.is_empty() {
            warnings.push("retrieval returned no contexts".into());
        }
    }

    // Rerank.
    let mut selected_texts: Vec<String> = Vec::new();
    let mut selected_ids: Vec<String> = Vec::new();
    if errors.is_empty() && !contexts.is_empty() {
        let texts: Vec<String> = contexts.iter().map(|c| c.chunk.text.clone()).collect();
        let scores: Vec<f64> = contexts.iter().map(|c| c.score).collect();
        match apply_strategy(env, pipeline, &qa.question, &texts, &scores, &contexts, &query_vec) {
            Ok(outcome) => {
                rerank_llm_calls = outcome.llm_calls;
                fallback_used |= outcome.fallback_used;
                warnings.extend(outcome.warnings);
                for ranked in &outcome.ranking {
                    selected_texts.push(texts[ranked.doc - 1].clone());
                    selected_ids.push(contexts[ranked.doc - 1].chunk.chunk_id.clone());
                }
            }
            Err(e) => errors.push(format!("rerank: {e}")),
        }
    }

    // Generate.
    let mut answer = None;
    if errors.is_empty() {
        match synthesize_answer(
            env.gateway,
            env.prompts,
            &qa.question,
            &selected_texts,
            env.generation,
        ) {
            Ok(generated) => {
                warnings.extend(generated.warnings.clone());
                answer = Some(generated);
            }
            Err(e) => errors.push(format!("generate: {e}")),
        }
    }
    let end_to_end_latency_s = env
        .clock
        .now()
        .saturating_sub(started)
        .as_secs_f64();

    // Judge, outside the measured window.
    let mut answer_similarity = None;
    let mut retrieval_precision = None;
    if errors.is_empty() {
        let generated = answer.as_ref().expect("answer exists when error-free");
        match judge_answer_similarity(
            env.gateway,
            env.prompts,
            &qa.question,
            &qa.reference_answer,
            &generated.text,
        ) {
            Ok(score) => answer_similarity = Some(score),
            Err(e) => errors.push(format!("similarity judge: {e}")),
        }
        match judge_retrieval_precision(env.gateway, env.prompts, &qa.question, &selected_texts) {
            Ok(outcome) => {
                warnings.extend(outcome.warnings);
                retrieval_precision = outcome.precision;
            }
            Err(e) => errors.push(format!("precision judge: {e}")),
        }
    }

    let answer_chars = answer.as_ref().map_or(0, |a| a.chars);
    let chars_per_second = if answer.is_some() && end_to_end_latency_s > 0.0 {
        answer_chars as f64 / end_to_end_latency_s
    } else {
        0.0
    };
    RunRecord {
        pipeline_id: pipeline.pipeline_id.clone(),
        question_id: qa.question_id.clone(),
        repetition,
        answer_similarity,
        retrieval_precision,
        end_to_end_latency_s,
        answer_chars,
        chars_per_second,
        rerank_llm_calls,
        fallback_used,
        contexts_used: selected_ids,
        answer: answer.map(|a| a.text),
        warnings,
        errors,
    }
}

fn apply_strategy(
    env: &QuestionEnv<'_>,
    pipeline: &PipelineRuntime,
    question: &str,
    texts: &[String],
    scores: &[f64],
    contexts: &[crate::index::RetrievedContext],
    query_vec: &[f64],
) -> Result<RerankOutcome, RerankError> {
    match &pipeline.strategy {
        RerankStrategy::None => Ok(rerank_none(scores)),
        RerankStrategy::LlmRelevance { top_n } => {
            rerank_llm_relevance(env.gateway, env.prompts, question, texts, *top_n, scores)
        }
        RerankStrategy::RebelOneTurn { top_n } => {
            rerank_one_turn(env.gateway, env.prompts, question, texts, *top_n, scores)
        }
        RerankStrategy::RebelTwoTurn { top_n } => {
            rerank_two_turn(env.gateway, env.prompts, question, texts, *top_n, scores)
        }
        RerankStrategy::TwoTurnRelevanceOnly { top_n } => {
            rerank_two_turn_relevance_only(env.gateway, env.prompts, question, texts, *top_n, scores)
        }
        RerankStrategy::RemoteCrossEncoder { top_n } => {
            let backend = env.rerank_endpoint.ok_or_else(|| {
                RerankError::Gateway(crate::gateway::GatewayError::Config(
                    "remote_cross_encoder pipeline but no rerank endpoint configured".into(),
                ))
            })?;
            rerank_remote(backend, env.retry, question, texts, *top_n)
        }
        RerankStrategy::Mmr { top_n, lambda } => {
            // Reuse the stored embeddings; candidates came from this index.
            let mut vectors = Vec::with_capacity(contexts.len());
            let mut ids = Vec::with_capacity(contexts.len());
            for c in contexts {
                let v = env.index.vector_for(&c.chunk.chunk_id).ok_or_else(|| {
                    RerankError::Index(IndexError::Invalid(format!(
                        "chunk {:?} missing from index",
                        c.chunk.chunk_id
                    )))
                })?;
                vectors.push(v.to_vec());
                ids.push(c.chunk.chunk_id.clone());
            }
            let ranking = rerank_mmr(query_vec, &vectors, &ids, *lambda, *top_n)?;
            Ok(RerankOutcome {
                ranking,
                ..Default::default()
            })
        }
    }
}

// --- the experiment loop ---

/// Provenance sidecar written next to the results file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunProvenance {
    pub config_hash: String,
    pub prompt_hashes: BTreeMap<String, String>,
    pub backend_fingerprints: BTreeMap<String, String>,
    pub embedder_id: String,
    pub index_chunks: usize,
    pub questions: usize,
    pub pipelines: Vec<String>,
    pub repetitions: u32,
}

pub fn meta_path(results_path: &Path) -> PathBuf {
    let mut name = results_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".meta.json");
    results_path.with_file_name(name)
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    /// Full contents of the results file after the run, in file order.
    pub records: Vec<RunRecord>,
    /// Records executed and appended by this invocation.
    pub written: usize,
    /// Planned units skipped because the results file already had them.
    pub skipped: usize,
}

/// Runs the full experiment grid against `out_path`, resuming any
/// existing results. Fails fast, before any model call, on an invalid
/// config, an embedder mismatch, a generator-evaluator collision, or
/// results produced under a different config.
pub fn run_experiment(
    config: &ExperimentConfig,
    qa: &[QaPair],
    index: &VectorIndex,
    out_path: &Path,
    clock: &dyn Clock,
) -> Result<ExperimentOutcome, HarnessError> {
    config.validate()?;
    if qa.is_empty() {
        return Err(HarnessError::Invalid("question set is empty".into()));
    }
    let backends = config.resolve_backends()?;
    let prompts = PromptSet::with_overrides(&config.prompt_overrides)
        .map_err(|e| HarnessError::Invalid(format!("prompt override: {e}")))?;
    run_experiment_with(config, qa, index, out_path, clock, &backends, &prompts)
}

/// [`run_experiment`] with backends and prompts supplied by the caller;
/// lets tests hold on to mock handles.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    qa: &[QaPair],
    index: &VectorIndex,
    out_path: &Path,
    clock: &dyn Clock,
    backends: &ResolvedBackends,
    prompts: &PromptSet,
) -> Result<ExperimentOutcome, HarnessError> {
    index.ensure_embedder(backends.embedder.id())?;
    let fingerprints = backends.gateway.fingerprints();
    if config.require_distinct_evaluator && fingerprints.get("generator") == fingerprints.get("evaluator") {
        return Err(HarnessError::Invalid(format!(
            "evaluator and generator resolve to the same backend and model ({}); \
             a model must not grade its own answers (set require_distinct_evaluator \
             to false to permit this)",
            fingerprints.get("generator").cloned().unwrap_or_default()
        )));
    }

    let provenance = RunProvenance {
        config_hash: config.hash(),
        prompt_hashes: prompts.hashes(),
        backend_fingerprints: fingerprints,
        embedder_id: backends.embedder.id().to_string(),
        index_chunks: index.len(),
        questions: qa.len(),
        pipelines: config
            .pipelines
            .iter()
            .map(|p| p.pipeline_id.clone())
            .collect(),
        repetitions: config.repetitions,
    };
    let meta = meta_path(out_path);
    let mut existing_keys: BTreeSet<(String, String, u32)> = BTreeSet::new();
    if out_path.exists() {
        if meta.exists() {
            let raw = fs::read_to_string(&meta).map_err(io_err(&meta))?;
            let prior: RunProvenance =
                serde_json::from_str(&raw).map_err(|e| HarnessError::Format {
                    path: meta.clone(),
                    message: e.to_string(),
                })?;
            if prior.config_hash != provenance.config_hash
                || prior.prompt_hashes != provenance.prompt_hashes
            {
                return Err(HarnessError::Invalid(format!(
                    "existing results in {} were produced under a different \
                     configuration; refusing to mix them",
                    out_path.display()
                )));
            }
        }
        for record in read_records(out_path)? {
            existing_keys.insert(record.key());
        }
    }
    fs::write(
        &meta,
        serde_json::to_string_pretty(&provenance).expect("provenance serializes"),
    )
    .map_err(io_err(&meta))?;

    let retry = config.retry_policy();
    let env = QuestionEnv {
        gateway: &backends.gateway,
        embedder: backends.embedder.as_ref(),
        rerank_endpoint: backends.rerank_endpoint.as_deref(),
        index,
        prompts,
        retry: &retry,
        clock,
        generation: &config.generation,
        embed_batch: config.embed_batch_size,
    };
    let runtimes: Vec<PipelineRuntime> = config
        .pipelines
        .iter()
        .map(|spec| PipelineRuntime::from_spec(spec, config))
        .collect();

    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out_path)
        .map_err(io_err(out_path))?;
    let writer = Mutex::new(std::io::BufWriter::new(file));
    let mut written = 0usize;
    let mut skipped = 0usize;

    let run_one_question = |qa_pair: &QaPair| -> Vec<RunRecord> {
        let mut records = Vec::new();
        for runtime in &runtimes {
            for repetition in 1..=config.repetitions {
                let key = (
                    runtime.pipeline_id.clone(),
                    qa_pair.question_id.clone(),
                    repetition,
                );
                if existing_keys.contains(&key) {
                    continue;
                }
                records.push(run_question(&env, runtime, qa_pair, repetition));
            }
        }
        records
    };
    let total_per_question = runtimes.len() * config.repetitions as usize;

    let question_indices: Vec<usize> = (0..qa.len()).collect();
    for batch in question_indices.chunks(config.parallelism.max(1)) {
        let mut batch_results: Vec<(usize, Vec<RunRecord>)> = if batch.len() == 1 {
            vec![(batch[0], run_one_question(&qa[batch[0]]))]
        } else {
            std::thread::scope(|scope| {
                let worker = &run_one_question;
                let handles: Vec<_> = batch
                    .iter()
                    .map(|&qi| scope.spawn(move || (qi, worker(&qa[qi]))))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("question worker panicked"))
                    .collect()
            })
        };
        batch_results.sort_by_key(|(qi, _)| *qi);
        let mut writer = writer.lock().unwrap();
        for (_, records) in batch_results {
            skipped += total_per_question - records.len();
            for record in records {
                let line = serde_json::to_string(&record).expect("record serializes");
                writeln!(writer, "{line}").map_err(io_err(out_path))?;
                writer.flush().map_err(io_err(out_path))?;
                written += 1;
            }
        }
    }
    drop(writer);

    Ok(ExperimentOutcome {
        records: read_records(out_path)?,
        written,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{split_into_chunks, ChunkingConfig, SourceDocument, WordTokenizer};
    use crate::gateway::{MockClock, MockEmbeddingBackend};
    use std::time::Duration;

    fn write_qa(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn qa_set_loads_pair_objects_with_generated_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_qa(
            dir.path(),
            "qa.json",
            r#"[{"question": "Q one?", "answer": "A one"},
                {"id": "custom", "question": "Q two?", "answer": "A two"}]"#,
        );
        let qa = load_qa_set(&path).unwrap();
        assert_eq!(qa[0].question_id, "q0001");
        assert_eq!(qa[1].question_id, "custom");
        assert_eq!(qa[1].reference_answer, "A two");
    }

    #[test]
    fn qa_set_loads_parallel_arrays() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_qa(
            dir.path(),
            "qa.json",
            r#"{"questions": ["Q1?", "Q2?", "Q3?"],
                "ground_truths": ["A1", "A2", "A3"]}"#,
        );
        let qa = load_qa_set(&path).unwrap();
        assert_eq!(qa.len(), 3);
        assert_eq!(qa[2].question_id, "q0003");
        assert_eq!(qa[2].question, "Q3?");
        assert_eq!(qa[2].reference_answer, "A3");
    }

    #[test]
    fn qa_set_rejects_mismatched_and_empty_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let mismatched = write_qa(
            dir.path(),
            "m.json",
            r#"{"questions": ["Q1?"], "ground_truths": ["A1", "A2"]}"#,
        );
        assert!(load_qa_set(&mismatched).is_err());
        let blank = write_qa(
            dir.path(),
            "b.json",
            r#"[{"question": "  ", "answer": "A"}]"#,
        );
        assert!(load_qa_set(&blank).is_err());
        let none = write_qa(dir.path(), "n.json", "[]");
        assert!(load_qa_set(&none).is_err());
    }

    fn tiny_index(n_docs: usize, embedder: &MockEmbeddingBackend) -> VectorIndex {
        let cfg = ChunkingConfig {
            chunk_size: 16,
            overlap: 4,
        };
        let mut chunks = Vec::new();
        for d in 0..n_docs {
            let doc = SourceDocument {
                doc_id: format!("doc{d:02}"),
                title: format!("Doc {d}"),
                body: (0..24).map(|i| format!("word{d}x{i} ")).collect(),
            };
            chunks.extend(split_into_chunks(&doc, &cfg, &WordTokenizer).unwrap());
        }
        let vectors = chunks
            .iter()
            .map(|c| embedder.vector_for(&c.text))
            .collect();
        VectorIndex::build(chunks, vectors, embedder.id()).unwrap()
    }

    fn mock_experiment_config(pipelines: &str) -> ExperimentConfig {
        let json = format!(
            r#"{{
            "backends": {{
                "generator": {{"kind": "mock", "id": "mock-generator", "script": [
                    {{"when_contains": "No supporting context documents", "reply": "No documents came back."}},
                    {{"reply": "Based on the documents, the answer is 42."}}
                ]}},
                "reranker": {{"kind": "mock", "id": "mock-reranker", "script": [
                    {{"reply": "Doc: 2, Relevance: 9.5\nDoc: 1, Relevance: 7\nDoc: 3, Relevance: 4.5"}}
                ]}},
                "prompt_generator": {{"kind": "mock", "id": "mock-prompt-generator", "script": [
                    {{"reply": "Rank the documents for this query.\n\nExample format: \n\n{{context_str}}\nQuestion: {{query_str}}\nAnswer:"}}
                ]}},
                "evaluator": {{"kind": "mock", "id": "mock-evaluator", "script": [
                    {{"when_contains": "Reference answer", "reply": "4"}},
                    {{"when_contains": "Context passage", "reply": "yes"}}
                ]}}
            }},
            "embedding": {{"kind": "mock", "dim": 32}},
            "rerank_endpoint": {{"kind": "mock_identity"}},
            "retrieval_k": 5,
            "repetitions": 2,
            "retry": {{"max_attempts": 3, "initial_backoff_ms": 0}},
            "pipelines": {pipelines}
        }}"#
        );
        serde_json::from_str(&json).unwrap()
    }

    #[test]
    fn experiment_runs_resume_and_stay_byte_identical() {
        let config = mock_experiment_config(
            r#"[{"pipeline_id": "plain", "strategy": {"kind": "none"}},
                {"pipeline_id": "one_turn", "strategy": {"kind": "rebel_one_turn", "top_n": 3}}]"#,
        );
        let embedder = MockEmbeddingBackend::new(32);
        let index = tiny_index(3, &embedder);
        let qa = vec![
            QaPair {
                question_id: "q0001".into(),
                question: "What is word0x3 about?".into(),
                reference_answer: "It is about 42.".into(),
            },
            QaPair {
                question_id: "q0002".into(),
                question: "Where does word2x9 appear?".into(),
                reference_answer: "In document two.".into(),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let out_a = dir.path().join("a.jsonl");
        let clock_a = MockClock::new(Duration::from_millis(5));
        let outcome = run_experiment(&config, &qa, &index, &out_a, &clock_a).unwrap();
        assert_eq!(outcome.written, 2 * 2 * 2);
        assert_eq!(outcome.skipped, 0);
        assert_eq!(outcome.records.len(), 8);
        assert!(outcome.records.iter().all(|r| !r.is_excluded()));

        // Canonical order: question outermost, then pipeline, then rep.
        let keys: Vec<(String, String, u32)> =
            outcome.records.iter().map(|r| r.key()).collect();
        assert_eq!(keys[0], ("plain".into(), "q0001".into(), 1));
        assert_eq!(keys[1], ("plain".into(), "q0001".into(), 2));
        assert_eq!(keys[2], ("one_turn".into(), "q0001".into(), 1));
        assert_eq!(keys[4], ("plain".into(), "q0002".into(), 1));

        // Resume: nothing to do, file untouched.
        let before = fs::read(&out_a).unwrap();
        let resumed = run_experiment(&config, &qa, &index, &out_a, &clock_a).unwrap();
        assert_eq!(resumed.written, 0);
        assert_eq!(resumed.skipped, 8);
        assert_eq!(fs::read(&out_a).unwrap(), before);

        // A fresh run with a fresh clock reproduces the bytes exactly.
        let out_b = dir.path().join("b.jsonl");
        let clock_b = MockClock::new(Duration::from_millis(5));
        run_experiment(&config, &qa, &index, &out_b, &clock_b).unwrap();
        assert_eq!(fs::read(&out_b).unwrap(), before);
    }

    #[test]
    fn resume_refuses_a_changed_config() {
        let config = mock_experiment_config(
            r#"[{"pipeline_id": "plain", "strategy": {"kind": "none"}}]"#,
        );
        let embedder = MockEmbeddingBackend::new(32);
        let index = tiny_index(2, &embedder);
        let qa = vec![QaPair {
            question_id: "q0001".into(),
            question: "What?".into(),
            reference_answer: "That.".into(),
        }];
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r.jsonl");
        let clock = MockClock::new(Duration::from_millis(5));
        run_experiment(&config, &qa, &index, &out, &clock).unwrap();
        let mut changed = config.clone();
        changed.retrieval_k = 4;
        let err = run_experiment(&changed, &qa, &index, &out, &clock).unwrap_err();
        assert!(err.to_string().contains("different"), "{err}");
    }

    #[test]
    fn evaluator_generator_collision_is_refused() {
        let mut config = mock_experiment_config(
            r#"[{"pipeline_id": "plain", "strategy": {"kind": "none"}}]"#,
        );
        // Point the evaluator at the generator's exact config.
        config.backends.evaluator = config.backends.generator.clone();
        let embedder = MockEmbeddingBackend::new(32);
        let index = tiny_index(2, &embedder);
        let qa = vec![QaPair {
            question_id: "q0001".into(),
            question: "What?".into(),
            reference_answer: "That.".into(),
        }];
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r.jsonl");
        let clock = MockClock::new(Duration::from_millis(5));
        let err = run_experiment(&config, &qa, &index, &out, &clock).unwrap_err();
        assert!(err.to_string().contains("grade its own answers"), "{err}");
        assert!(!out.exists() || fs::read_to_string(&out).unwrap().is_empty());
    }

    #[test]
    fn embedder_mismatch_fails_before_any_call() {
        let config = mock_experiment_config(
            r#"[{"pipeline_id": "plain", "strategy": {"kind": "none"}}]"#,
        );
        let foreign = MockEmbeddingBackend::new(32).with_id("some-other-embedder");
        let index = tiny_index(2, &foreign);
        let qa = vec![QaPair {
            question_id: "q0001".into(),
            question: "What?".into(),
            reference_answer: "That.".into(),
        }];
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r.jsonl");
        let clock = MockClock::new(Duration::from_millis(5));
        let err = run_experiment(&config, &qa, &index, &out, &clock).unwrap_err();
        assert!(matches!(err, HarnessError::Index(IndexError::EmbedderMismatch { .. })));
    }

    #[test]
    fn failed_judge_excludes_the_record_but_not_the_run() {
        let mut config = mock_experiment_config(
            r#"[{"pipeline_id": "plain", "strategy": {"kind": "none"}}]"#,
        );
        // An evaluator that never yields a usable similarity score.
        config.backends.evaluator = Some(serde_json::from_str(
            r#"{"kind": "mock", "id": "mock-evaluator", "script": [
                {"when_contains": "Reference answer", "reply": "inscrutable"},
                {"when_contains": "Context passage", "reply": "yes"}
            ]}"#,
        )
        .unwrap());
        let embedder = MockEmbeddingBackend::new(32);
        let index = tiny_index(2, &embedder);
        let qa = vec![QaPair {
            question_id: "q0001".into(),
            question: "What?".into(),
            reference_answer: "That.".into(),
        }];
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r.jsonl");
        let clock = MockClock::new(Duration::from_millis(5));
        let outcome = run_experiment(&config, &qa, &index, &out, &clock).unwrap();
        assert_eq!(outcome.records.len(), 2);
        for record in &outcome.records {
            assert!(record.is_excluded());
            assert!(record.errors[0].contains("similarity judge"));
            assert!(record.answer.is_some(), "answer was still generated");
        }
    }

    #[test]
    fn latency_comes_from_the_injected_clock() {
        let config = mock_experiment_config(
            r#"[{"pipeline_id": "plain", "strategy": {"kind": "none"}}]"#,
        );
        let embedder = MockEmbeddingBackend::new(32);
        let index = tiny_index(2, &embedder);
        let qa = vec![QaPair {
            question_id: "q0001".into(),
            question: "What is anything?".into(),
            reference_answer: "Something.".into(),
        }];
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r.jsonl");
        let clock = MockClock::new(Duration::from_millis(250));
        let outcome = run_experiment(&config, &qa, &index, &out, &clock).unwrap();
        let record = &outcome.records[0];
        // Two readings per record: start and end of the answer path.
        assert!((record.end_to_end_latency_s - 0.25).abs() < 1e-9);
        let expected_chars = "Based on the documents, the answer is 42.".chars().count();
        assert_eq!(record.answer_chars, expected_chars);
        assert!((record.chars_per_second - expected_chars as f64 / 0.25).abs() < 1e-9);
    }
}
