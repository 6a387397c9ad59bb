//! Retrieval-augmented generation with LLM-based reranking.
//!
//! The crate covers the full loop: ingest documents into token-window
//! chunks ([`corpus`]), embed and retrieve them ([`index`]), rerank the
//! retrieved contexts with one of several strategies ([`rerank`]),
//! synthesize an answer ([`generate`]), judge it ([`eval`]), and run the
//! whole thing repeatedly over a question set with aggregate reporting
//! ([`harness`], [`report`]).
//!
//! The reranking strategies of interest score candidates on relevance
//! plus a weighted set of secondary criteria (depth, perspective
//! diversity, clarity, authoritativeness, recency) in a single LLM call,
//! either with a fixed prompt or with a prompt generated per query by a
//! second model call. Relevance-only reranking, maximal marginal
//! relevance, and a remote cross-encoder endpoint are included as
//! baselines.
//!
//! All LLM traffic goes through [`gateway`], which also provides scripted
//! mock backends so every pipeline can run deterministically offline.

pub mod config;
pub mod corpus;
pub mod eval;
pub mod gateway;
pub mod generate;
pub mod harness;
pub mod index;
pub mod prompts;
pub mod rerank;
pub mod report;

pub use config::ExperimentConfig;
pub use corpus::{Chunk, ChunkingConfig, SourceDocument};
pub use gateway::{Gateway, Role};
pub use harness::{QaPair, RunRecord};
pub use index::VectorIndex;
pub use rerank::RerankStrategy;
