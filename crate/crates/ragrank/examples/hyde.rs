//! Hypothetical-answer retrieval (HyDE): embed a model-written passage
//! that would answer the question instead of embedding the question
//! itself. Questions and passages live in different phrasings, so the
//! swap often lands closer to the right chunk.
//!
//! Scripted mock backends keep this fully offline:
//! `cargo run --example hyde`.

use std::sync::Arc;

use ragrank::corpus::Chunk;
use ragrank::gateway::{EmbeddingBackend, Gateway, MockChatBackend, MockEmbeddingBackend, Role};
use ragrank::index::{hyde_transform, VectorIndex};
use ragrank::prompts::PromptSet;

const CANBERRA: &str = "The capital of Australia is Canberra, a planned city \
                        chosen as a compromise between Sydney and Melbourne.";

fn chunk(id: &str, text: &str) -> Chunk {
    Chunk {
        chunk_id: format!("{id}#00000"),
        doc_id: id.into(),
        title: id.into(),
        text: text.into(),
        token_start: 0,
        token_end: 1,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let embedder = MockEmbeddingBackend::new(32);
    let chunks = vec![
        chunk("capital", CANBERRA),
        chunk("anthem", "Advance Australia Fair replaced God Save the Queen in 1984."),
        chunk("reef", "The Great Barrier Reef stretches along the Queensland coast."),
    ];
    let vectors = chunks.iter().map(|c| embedder.vector_for(&c.text)).collect();
    let index = VectorIndex::build(chunks, vectors, embedder.id())?;

    let question = "Which city is Australia's capital?";
    let prompts = PromptSet::default();

    // The generator is scripted to write exactly the passage the corpus
    // contains. A real model gets close rather than exact; the hash
    // embedder needs exact to show the effect.
    let gateway = Gateway::builder()
        .bind(
            Role::Generator,
            Arc::new(
                MockChatBackend::new("mock-hyde")
                    .reply_when("Please write a passage that answers", CANBERRA),
            ),
            "mock-hyde",
        )
        .build();

    println!("question: {question}\n");

    let raw_hits = index.retrieve_top_k(&embedder.vector_for(question), 1)?;
    println!(
        "raw question embedding retrieves   {:?} (score {:+.3})",
        raw_hits[0].chunk.doc_id, raw_hits[0].score
    );

    let hyde = hyde_transform(question, &gateway, &prompts)?;
    assert!(!hyde.fallback_used);
    let hyde_hits = index.retrieve_top_k(&embedder.vector_for(&hyde.text), 1)?;
    println!(
        "hypothetical passage retrieves     {:?} (score {:+.3})",
        hyde_hits[0].chunk.doc_id, hyde_hits[0].score
    );
    println!("\nhypothetical passage was: {}", hyde.text);

    // An empty completion falls back to the raw question and says so;
    // the pipeline keeps going either way.
    let silent = Gateway::builder()
        .bind(
            Role::Generator,
            Arc::new(MockChatBackend::new("mock-silent").reply_any("")),
            "mock-silent",
        )
        .build();
    let fallback = hyde_transform(question, &silent, &prompts)?;
    println!(
        "\nempty completion -> fallback_used = {}, retrieval text = {:?}",
        fallback.fallback_used, fallback.text
    );
    Ok(())
}
