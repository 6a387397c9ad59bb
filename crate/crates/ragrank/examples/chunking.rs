//! Token-window chunking: how a document becomes overlapping retrieval
//! units. Run with `cargo run --example chunking`.

use ragrank::corpus::{
    expected_chunk_count, split_into_chunks, ChunkingConfig, SourceDocument, Tokenizer,
    WordTokenizer,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let doc = SourceDocument {
        doc_id: "mmr-1998".into(),
        title: "Diversity in retrieval".into(),
        body: "Early retrieval systems returned documents ranked purely by query \
               similarity. Later work observed that near-duplicate results waste \
               the reader's attention, and proposed selecting documents that are \
               relevant to the query yet dissimilar from documents already chosen. \
               That greedy balance between relevance and novelty became a standard \
               baseline for diversity-aware ranking and still anchors comparisons \
               against modern learned rerankers today."
            .into(),
    };

    // Small windows so the overlap is visible; real corpora default to
    // 2000-token windows with a 200-token overlap.
    let cfg = ChunkingConfig {
        chunk_size: 24,
        overlap: 6,
    };
    let tokens = WordTokenizer.tokenize(&doc.body).len();
    let chunks = split_into_chunks(&doc, &cfg, &WordTokenizer)?;
    println!(
        "{} tokens, windows of {} with overlap {} -> {} chunks (formula says {})\n",
        tokens,
        cfg.chunk_size,
        cfg.overlap,
        chunks.len(),
        expected_chunk_count(tokens, &cfg),
    );
    for chunk in &chunks {
        println!(
            "{}  tokens [{:>3}, {:>3})\n    {}\n",
            chunk.chunk_id,
            chunk.token_start,
            chunk.token_end,
            chunk.text.replace('\n', " ")
        );
    }
    println!("note: each window after the first repeats the previous window's last {} tokens", cfg.overlap);
    Ok(())
}
