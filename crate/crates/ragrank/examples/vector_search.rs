//! Build a vector index from a small corpus and query it.
//!
//! Uses the deterministic mock embedder, so no network or API key is
//! needed; identical text always maps to the identical vector. Run with
//! `cargo run --example vector_search`.

use ragrank::corpus::{split_into_chunks, ChunkingConfig, SourceDocument, WordTokenizer};
use ragrank::gateway::{EmbeddingBackend, MockEmbeddingBackend, RetryPolicy};
use ragrank::index::VectorIndex;

fn doc(id: &str, title: &str, body: &str) -> SourceDocument {
    SourceDocument {
        doc_id: id.into(),
        title: title.into(),
        body: body.into(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = vec![
        doc(
            "volcano",
            "Volcanic eruptions",
            "Magma rises through fractures in the crust and erupts as lava.",
        ),
        doc(
            "glacier",
            "Glacial motion",
            "Glaciers flow downhill under their own weight, carving valleys.",
        ),
        doc(
            "tide",
            "Ocean tides",
            "Tides follow the gravitational pull of the moon and the sun.",
        ),
        doc(
            "aurora",
            "Polar aurora",
            "Charged solar particles excite atmospheric gases near the poles.",
        ),
    ];

    let cfg = ChunkingConfig {
        chunk_size: 64,
        overlap: 8,
    };
    let mut chunks = Vec::new();
    for d in &corpus {
        chunks.extend(split_into_chunks(d, &cfg, &WordTokenizer)?);
    }

    let embedder = MockEmbeddingBackend::new(48);
    let index = VectorIndex::from_backend(chunks, &embedder, &RetryPolicy::none(), 32)?;
    println!(
        "indexed {} chunks at dim {} with embedder {:?}",
        index.len(),
        index.dim(),
        index.embedder_id()
    );

    // Round-trip through the on-disk format.
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("demo.idx");
    index.save(&path)?;
    let index = VectorIndex::load(&path)?;
    index.ensure_embedder(embedder.id())?;
    println!("reloaded from {}\n", path.display());

    // The mock embedder hashes text, so an exact restatement of a chunk
    // retrieves it with cosine 1; everything else lands lower.
    let query = "Tides follow the gravitational pull of the moon and the sun.";
    let query_vec = embedder.vector_for(query);
    println!("query: {query}");
    for hit in index.retrieve_top_k(&query_vec, 3)? {
        println!(
            "  #{} {:<16} score {:+.4}  ({})",
            hit.rank, hit.chunk.chunk_id, hit.score, hit.chunk.title
        );
    }

    // Mixing embedders is refused rather than silently producing
    // meaningless similarities.
    let other = MockEmbeddingBackend::new(48).with_id("some-other-model");
    match index.ensure_embedder(other.id()) {
        Err(e) => println!("\nmismatched embedder rejected: {e}"),
        Ok(()) => unreachable!("ids differ"),
    }
    Ok(())
}
