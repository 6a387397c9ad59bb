//! The whole engine end to end, fully offline: ingest a toy corpus,
//! index it with the mock embedder, run five pipelines over a question
//! set with repetition, resume the finished run (a no-op), and render
//! the report artifacts. Scripted mocks play every model role, and a
//! mock clock makes the output byte-reproducible between runs.
//!
//! `cargo run --example mock_experiment`

use std::time::Duration;

use ragrank::config::ExperimentConfig;
use ragrank::corpus::{split_into_chunks, ChunkingConfig, SourceDocument, WordTokenizer};
use ragrank::gateway::{EmbeddingBackend, MockClock, MockEmbeddingBackend, RetryPolicy};
use ragrank::harness::{run_experiment, QaPair};
use ragrank::index::VectorIndex;
use ragrank::report::write_report;

// Every model role is a scripted mock. First matching rule wins; the
// evaluator judges the listicle chunk irrelevant and everything else
// relevant, so pipelines that keep it in play pay for it in precision.
const CONFIG: &str = r#"{
    "backends": {
        "generator": {"kind": "mock", "id": "mock-generator", "script": [
            {"when_contains": "No supporting context documents", "reply": "Nothing was retrieved."},
            {"reply": "Wild yeast and bacteria ferment the dough, and folding traps the gas they give off."}
        ]},
        "reranker": {"kind": "mock", "id": "mock-reranker", "script": [
            {"when_contains": "A list of documents is shown below", "reply": "Doc: 1, Relevance: 8\nDoc: 2, Relevance: 7\nDoc: 3, Relevance: 5"},
            {"reply": "Doc: 1, Relevance: 15\nDoc: 2, Relevance: 10"}
        ]},
        "prompt_generator": {"kind": "mock", "id": "mock-promptgen", "script": [
            {"reply": "Score each document on relevance to the baking question, 0 to 10.\n\nExample format: \nDoc: 1, Relevance: 8\n\n{context_str}\nQuestion: {query_str}\nAnswer:"}
        ]},
        "evaluator": {"kind": "mock", "id": "mock-evaluator", "script": [
            {"when_contains": "embarrassing baking disasters", "reply": "no"},
            {"when_contains": "Context passage", "reply": "yes"},
            {"when_contains": "Nothing was retrieved", "reply": "0"},
            {"when_contains": "Reference answer", "reply": "4"}
        ]}
    },
    "embedding": {"kind": "mock", "dim": 32},
    "retrieval_k": 4,
    "repetitions": 2,
    "retry": {"max_attempts": 3, "initial_backoff_ms": 0},
    "pipelines": [
        {"pipeline_id": "none", "strategy": {"kind": "none"}},
        {"pipeline_id": "llm_relevance", "strategy": {"kind": "llm_relevance", "top_n": 3}},
        {"pipeline_id": "rebel_one_turn", "strategy": {"kind": "rebel_one_turn", "top_n": 3}},
        {"pipeline_id": "rebel_two_turn", "strategy": {"kind": "rebel_two_turn", "top_n": 3}},
        {"pipeline_id": "mmr", "strategy": {"kind": "mmr", "top_n": 3, "lambda": 0.5}}
    ]
}"#;

fn doc(id: &str, body: &str) -> SourceDocument {
    SourceDocument {
        doc_id: id.into(),
        title: id.into(),
        body: body.into(),
    }
}

fn qa(id: &str, question: &str, reference: &str) -> QaPair {
    QaPair {
        question_id: id.into(),
        question: question.into(),
        reference_answer: reference.into(),
    }
}

fn cell(agg: &Option<ragrank::eval::Aggregate>) -> String {
    match agg {
        Some(a) => format!("{:.2} ±{:.2}", a.mean, (a.ci95_high - a.ci95_low) / 2.0),
        None => "-".into(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = vec![
        doc("biology", "Wild yeast and lactic acid bacteria produce the carbon dioxide that makes sourdough rise."),
        doc("technique", "Bakers fold the dough to strengthen gluten so it traps gas during the final proof."),
        doc("history", "Sourdough starters fed the miners of the 1849 gold rush."),
        doc("listicle", "Our ten most embarrassing baking disasters, ranked for your amusement."),
    ];
    let questions = vec![
        qa("q0001", "What makes sourdough bread rise?", "Carbon dioxide from wild yeast and bacteria."),
        qa("q0002", "Why do bakers fold sourdough?", "Folding strengthens gluten so the dough holds gas."),
    ];

    let config: ExperimentConfig = serde_json::from_str(CONFIG)?;
    let embedder = MockEmbeddingBackend::new(32);
    let mut chunks = Vec::new();
    for d in &corpus {
        chunks.extend(split_into_chunks(d, &ChunkingConfig::default(), &WordTokenizer)?);
    }
    let index = VectorIndex::from_backend(chunks, &embedder, &RetryPolicy::none(), 64)?;
    println!(
        "indexed {} chunks with {:?}\n",
        index.len(),
        embedder.id()
    );

    let dir = tempfile::tempdir()?;
    let results = dir.path().join("results.jsonl");
    let clock = MockClock::new(Duration::from_millis(250));

    let first = run_experiment(&config, &questions, &index, &results, &clock)?;
    println!(
        "run 1: wrote {} records ({} pipelines x {} questions x 2 repetitions)",
        first.written,
        config.pipelines.len(),
        questions.len()
    );

    // Rerunning against the same results file resumes: every unit is
    // already present, so nothing executes.
    let second = run_experiment(&config, &questions, &index, &results, &clock)?;
    println!(
        "run 2: wrote {} records, skipped {} already present\n",
        second.written, second.skipped
    );

    let report_dir = dir.path().join("report");
    let summary = write_report(&results, &report_dir, None, false)?;
    println!(
        "{:<18} {:>7} {:>12} {:>12} {:>14} {:>8}",
        "pipeline", "records", "similarity", "precision", "chars/s", "quality"
    );
    for p in &summary.pipelines {
        println!(
            "{:<18} {:>7} {:>12} {:>12} {:>14} {:>8}",
            p.pipeline_id,
            p.records,
            cell(&p.answer_similarity),
            cell(&p.retrieval_precision),
            cell(&p.chars_per_second),
            p.quality_composite
                .map(|q| format!("{q:.2}"))
                .unwrap_or_else(|| "-".into()),
        );
    }

    let prov = summary.provenance.expect("run wrote a provenance sidecar");
    println!(
        "\nconfig hash {}..., embedder {:?}, artifacts in {}:",
        &prov.config_hash[..12],
        prov.embedder_id,
        report_dir.display()
    );
    for name in ["summary.json", "report.csv", "scatter.svg"] {
        let len = std::fs::metadata(report_dir.join(name))?.len();
        println!("  {name} ({len} bytes)");
    }
    Ok(())
}
