//! Two-turn reranking: a meta prompt asks one model to write a
//! reranking prompt tailored to this query, then a second call reranks
//! with it. The generated prompt infers query-specific criteria (for a
//! medical question it might weight clinical evidence; here, for a
//! history question, primary sources). Exactly two chat calls when
//! generation succeeds, three when it fails twice and the fixed one-turn
//! prompt steps in.
//!
//! Run offline with `cargo run --example two_turn_rerank`.

use std::sync::Arc;

use ragrank::gateway::{Gateway, MockChatBackend, Role};
use ragrank::prompts::PromptSet;
use ragrank::rerank::rerank_two_turn;

// What the prompt-generator model is scripted to produce: a complete
// reranking prompt with query-specific criteria. The engine only checks
// for the mandated tail (the example block and both placeholders).
const GENERATED: &str = "You are a re-ranking system for questions about naval history.\n\
Score each document's Relevance from 0 to 10, then score Primary Source \
Proximity, Chronological Accuracy, and Scholarly Rigor from 0 to 5.\n\
Final Score = Relevance + 0.5 * (sum of the other properties).\n\
Discard documents with Relevance below 3 and list the rest as shown.\n\
Example format: \n\
Doc: 9, Relevance: 12.5\n\
Doc: 3, Relevance: 7\n\
\n\
{context_str}\n\
Question: {query_str}\n\
Answer:\n";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let query = "Why did the Spanish Armada fail in 1588?";
    let contexts: Vec<String> = [
        "A contemporary captain's log describes the fireship attack at Calais.",
        "Storms scattered the fleet on the long route home around Scotland.",
        "A blog post ranks history's ten most embarrassing military defeats.",
    ]
    .map(String::from)
    .to_vec();
    let retrieval_scores = [0.74, 0.71, 0.69];
    let prompts = PromptSet::default();

    let happy = Gateway::builder()
        .bind(
            Role::PromptGenerator,
            Arc::new(MockChatBackend::new("mock-promptgen").reply_when("prompt generator", GENERATED)),
            "mock-promptgen",
        )
        .bind(
            Role::Reranker,
            Arc::new(
                MockChatBackend::new("mock-reranker")
                    .reply_when("naval history", "Doc: 1, Relevance: 13.5\nDoc: 2, Relevance: 11"),
            ),
            "mock-reranker",
        )
        .build();

    let outcome = rerank_two_turn(&happy, &prompts, query, &contexts, 3, &retrieval_scores)?;
    println!("turn 1 wrote this query-specific prompt:\n");
    for line in outcome.generated_prompt.as_deref().unwrap_or("").lines() {
        println!("  | {line}");
    }
    println!("\nturn 2 ranked with it:");
    for r in &outcome.ranking {
        println!("  candidate {} at {}", r.doc, r.score);
    }
    println!(
        "chat calls: {}, fallback_used: {}",
        outcome.llm_calls, outcome.fallback_used
    );
    assert_eq!(outcome.llm_calls, 2);

    // When the generator keeps omitting the mandated example block, the
    // engine asks once more, gives up, and reranks with the fixed
    // one-turn prompt instead. The question still gets answered.
    let stubborn = Gateway::builder()
        .bind(
            Role::PromptGenerator,
            Arc::new(MockChatBackend::new("mock-promptgen").reply_any("Rank the documents nicely.")),
            "mock-promptgen",
        )
        .bind(
            Role::Reranker,
            Arc::new(
                MockChatBackend::new("mock-reranker")
                    .reply_when("re-ranking system", "Doc: 2, Relevance: 10"),
            ),
            "mock-reranker",
        )
        .build();

    let fallback = rerank_two_turn(&stubborn, &prompts, query, &contexts, 3, &retrieval_scores)?;
    println!(
        "\nunusable generations -> fixed prompt reranked {:?} in {} calls, fallback_used: {}",
        fallback.ranking.iter().map(|r| r.doc).collect::<Vec<_>>(),
        fallback.llm_calls,
        fallback.fallback_used
    );
    for w in &fallback.warnings {
        println!("  warning: {w}");
    }
    assert_eq!(fallback.llm_calls, 3);
    Ok(())
}
