//! Thin command-line front end over the library: `ingest` normalizes a
//! corpus, `index` chunks and embeds it, `run` executes an experiment,
//! and `report` aggregates the results. Everything interesting lives in
//! the library; see the examples directory for programmatic use.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ragrank::config::ExperimentConfig;
use ragrank::corpus::{load_corpus, save_corpus, split_into_chunks, ChunkingConfig, WordTokenizer};
use ragrank::gateway::{HttpEmbeddingBackend, MockEmbeddingBackend, RetryPolicy, SystemClock};
use ragrank::harness::{load_qa_set, run_experiment};
use ragrank::index::VectorIndex;
use ragrank::report::write_report;

#[derive(Parser)]
#[command(
    name = "ragrank",
    version,
    about = "Retrieval, multi-criteria reranking, and evaluation for RAG pipelines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a corpus directory (or JSON manifest) into corpus.json.
    Ingest {
        /// Directory of .txt files, or a JSON corpus file.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Chunk a corpus and embed it into a binary vector index.
    Index {
        /// corpus.json produced by ingest (a directory also works).
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "text-embedding-3-large")]
        embedder_model: String,
        /// Chunk length in tokens.
        #[arg(long, default_value_t = 2000)]
        chunk_size: usize,
        /// Token overlap between consecutive chunks.
        #[arg(long, default_value_t = 200)]
        overlap: usize,
        #[arg(long, default_value = "https://api.openai.com")]
        base_url: String,
        /// Environment variable holding the bearer token.
        #[arg(long, default_value = "OPENAI_API_KEY")]
        api_key_env: String,
        /// Expected embedding dimension of the model.
        #[arg(long, default_value_t = 3072)]
        dim: usize,
        /// Texts per embedding request.
        #[arg(long, default_value_t = 128)]
        batch: usize,
        /// Embed offline with the deterministic hash embedder at this
        /// dimension instead of calling the HTTP backend.
        #[arg(long)]
        mock_dim: Option<usize>,
    },
    /// Execute an experiment config against a QA set and an index,
    /// appending to (and resuming from) the results file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        qa: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate a results file into summary.json, report.csv, and
    /// scatter.svg.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory for the report files.
        #[arg(long)]
        out: PathBuf,
        /// Report on an unfinished run instead of failing.
        #[arg(long)]
        allow_partial: bool,
        /// Omit the emission timestamp so reports are byte-reproducible.
        #[arg(long)]
        no_timestamp: bool,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<(), String> {
    match command {
        Command::Ingest { corpus, out } => {
            let docs = load_corpus(&corpus).map_err(|e| e.to_string())?;
            save_corpus(&docs, &out).map_err(|e| e.to_string())?;
            println!("ingested {} documents into {}", docs.len(), out.display());
            Ok(())
        }
        Command::Index {
            corpus,
            out,
            embedder_model,
            chunk_size,
            overlap,
            base_url,
            api_key_env,
            dim,
            batch,
            mock_dim,
        } => {
            let docs = load_corpus(&corpus).map_err(|e| e.to_string())?;
            let cfg = ChunkingConfig {
                chunk_size,
                overlap,
            };
            let mut chunks = Vec::new();
            for doc in &docs {
                chunks.extend(
                    split_into_chunks(doc, &cfg, &WordTokenizer).map_err(|e| e.to_string())?,
                );
            }
            let retry = RetryPolicy::default();
            let index = match mock_dim {
                Some(d) => {
                    let backend = MockEmbeddingBackend::new(d);
                    VectorIndex::from_backend(chunks, &backend, &retry, batch)
                }
                None => {
                    let api_key = std::env::var(&api_key_env).ok();
                    if api_key.is_none() {
                        log::warn!("{api_key_env} is not set; sending unauthenticated requests");
                    }
                    let backend = HttpEmbeddingBackend::new(base_url, api_key, embedder_model, dim);
                    VectorIndex::from_backend(chunks, &backend, &retry, batch)
                }
            }
            .map_err(|e| e.to_string())?;
            index.save(&out).map_err(|e| e.to_string())?;
            println!(
                "indexed {} chunks from {} documents (embedder {}, dim {}) into {}",
                index.len(),
                docs.len(),
                index.embedder_id(),
                index.dim(),
                out.display()
            );
            Ok(())
        }
        Command::Run {
            config,
            qa,
            index,
            out,
        } => {
            let config = ExperimentConfig::load(&config).map_err(|e| e.to_string())?;
            let qa = load_qa_set(&qa).map_err(|e| e.to_string())?;
            let index = VectorIndex::load(&index).map_err(|e| e.to_string())?;
            let clock = SystemClock::default();
            let outcome =
                run_experiment(&config, &qa, &index, &out, &clock).map_err(|e| e.to_string())?;
            let excluded = outcome.records.iter().filter(|r| r.is_excluded()).count();
            println!(
                "ran {} new records ({} already present); file now holds {} records, {} excluded",
                outcome.written,
                outcome.skipped,
                outcome.records.len(),
                excluded
            );
            println!("next: ragrank report --in {} --out report/", out.display());
            Ok(())
        }
        Command::Report {
            input,
            out,
            allow_partial,
            no_timestamp,
        } => {
            let generated_at = if no_timestamp {
                None
            } else {
                Some(humantime::format_rfc3339_seconds(std::time::SystemTime::now()).to_string())
            };
            let summary = write_report(&input, &out, generated_at, allow_partial)
                .map_err(|e| e.to_string())?;
            let cell =
                |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
            for p in &summary.pipelines {
                println!(
                    "{:<28} similarity {:>7} precision {:>7} chars/s {:>9} quality {:>7}",
                    p.pipeline_id,
                    cell(p.answer_similarity.map(|a| a.mean)),
                    cell(p.retrieval_precision.map(|a| a.mean)),
                    cell(p.chars_per_second.map(|a| a.mean)),
                    cell(p.quality_composite),
                );
            }
            println!("report written to {}", out.display());
            Ok(())
        }
    }
}
