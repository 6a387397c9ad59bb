//! End-to-end exercise of the installed binary: ingest -> index -> run
//! -> report, all offline on mock backends.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ragrank(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ragrank"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

const CONFIG: &str = r#"{
    "backends": {
        "generator": {"kind": "mock", "id": "mock-generator", "script": [
            {"when_contains": "No supporting context documents", "reply": "Nothing was retrieved."},
            {"reply": "Gravity keeps the moon in orbit around the earth."}
        ]},
        "reranker": {"kind": "mock", "id": "mock-reranker", "script": [
            {"reply": "Doc: 2, Relevance: 9\nDoc: 1, Relevance: 6"}
        ]},
        "prompt_generator": {"kind": "mock", "id": "mock-prompt-generator", "script": [
            {"reply": "Rank by relevance.\n\nExample format: \n\n{context_str}\nQuestion: {query_str}\nAnswer:"}
        ]},
        "evaluator": {"kind": "mock", "id": "mock-evaluator", "script": [
            {"when_contains": "Reference answer", "reply": "5"},
            {"when_contains": "Context passage", "reply": "yes"}
        ]}
    },
    "embedding": {"kind": "mock", "dim": 32},
    "retrieval_k": 3,
    "repetitions": 2,
    "retry": {"max_attempts": 3, "initial_backoff_ms": 0},
    "pipelines": [
        {"pipeline_id": "none", "strategy": {"kind": "none"}},
        {"pipeline_id": "rebel_one_turn", "strategy": {"kind": "rebel_one_turn", "top_n": 2}}
    ]
}"#;

const QA: &str = r#"{
    "questions": ["Why does the moon orbit the earth?", "What holds galaxies together?"],
    "ground_truths": ["Gravity binds the moon to the earth.", "Gravity, including dark matter's contribution."]
}"#;

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let corpus_dir = root.join("docs");
    fs::create_dir(&corpus_dir).unwrap();
    fs::write(
        corpus_dir.join("astronomy.txt"),
        "The moon orbits the earth because gravity pulls them together. \
         Orbital mechanics balances velocity against gravitational attraction.",
    )
    .unwrap();
    fs::write(
        corpus_dir.join("cosmology.txt"),
        "Galaxies are bound by gravity including the unseen mass called dark matter. \
         Rotation curves revealed that visible matter alone cannot hold them together.",
    )
    .unwrap();
    fs::write(
        corpus_dir.join("geology.txt"),
        "Plate tectonics reshapes the crust over millions of years. \
         Earthquakes release strain accumulated along faults.",
    )
    .unwrap();
    fs::write(root.join("config.json"), CONFIG).unwrap();
    fs::write(root.join("qa.json"), QA).unwrap();

    let out = stdout(&ragrank(
        &["ingest", "--corpus", "docs", "--out", "corpus.json"],
        root,
    ));
    assert!(out.contains("3 documents"), "{out}");

    let out = stdout(&ragrank(
        &[
            "index",
            "--corpus",
            "corpus.json",
            "--out",
            "index.bin",
            "--mock-dim",
            "32",
        ],
        root,
    ));
    assert!(out.contains("indexed 3 chunks"), "{out}");
    assert!(out.contains("mock-embedder-32d"), "{out}");

    let run_args = [
        "run",
        "--config",
        "config.json",
        "--qa",
        "qa.json",
        "--index",
        "index.bin",
        "--out",
        "results.jsonl",
    ];
    let out = stdout(&ragrank(&run_args, root));
    assert!(
        out.contains("ran 8 new records (0 already present)"),
        "{out}"
    );
    assert!(out.contains("8 records, 0 excluded"), "{out}");

    // Rerunning resumes: everything is already recorded.
    let out = stdout(&ragrank(&run_args, root));
    assert!(
        out.contains("ran 0 new records (8 already present)"),
        "{out}"
    );

    let out = stdout(&ragrank(
        &[
            "report",
            "--in",
            "results.jsonl",
            "--out",
            "report",
            "--no-timestamp",
        ],
        root,
    ));
    assert!(out.contains("none"), "{out}");
    assert!(out.contains("rebel_one_turn"), "{out}");
    assert!(out.contains("report written to"), "{out}");

    let csv = fs::read_to_string(root.join("report/report.csv")).unwrap();
    assert!(csv.starts_with("pipeline_id,records,excluded,fallbacks,answer_similarity_mean"));
    assert_eq!(csv.lines().count(), 3, "header plus one row per pipeline");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("report/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["total_records"], 8);
    assert_eq!(summary["excluded_records"], 0);
    assert_eq!(
        summary["provenance"]["embedder_id"],
        serde_json::json!("mock-embedder-32d")
    );
    assert!(root.join("report/scatter.svg").exists());
}

#[test]
fn report_on_a_missing_file_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let output = ragrank(
        &["report", "--in", "absent.jsonl", "--out", "report"],
        dir.path(),
    );
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("absent.jsonl"), "{stderr}");
}
