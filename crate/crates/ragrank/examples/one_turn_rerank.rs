//! One-turn multi-criteria reranking, the core strategy.
//!
//! A single chat call scores every retrieved candidate on relevance
//! (0-10) plus five secondary criteria (0-5 each, weight 0.5), reports
//! `Final Score = Relevance + sum(0.5 * criterion)` per document, and
//! drops anything scoring below relevance 3. The model does the
//! arithmetic in-prompt; the engine parses `Doc: <n>, Relevance: <score>`
//! lines back out. Scripted mock replies stand in for the model here:
//! `cargo run --example one_turn_rerank`.

use std::sync::Arc;

use indexmap::IndexMap;
use ragrank::gateway::{Gateway, MockChatBackend, Role};
use ragrank::prompts::PromptSet;
use ragrank::rerank::{
    composite_score, default_weights, rerank_one_turn, SECONDARY_CRITERIA,
};

fn gateway_replying(reply: &str) -> Gateway {
    Gateway::builder()
        .bind(
            Role::Reranker,
            Arc::new(MockChatBackend::new("mock-reranker").reply_any(reply)),
            "mock-reranker",
        )
        .build()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let query = "How do vaccines train the immune system?";
    let contexts: Vec<String> = [
        "Vaccines work, according to a pamphlet from 2003.",
        "A vaccine presents a harmless antigen so that B and T cells build \
         memory before any real infection; peer-reviewed sources from 2021 \
         detail the full signaling cascade.",
        "Immune memory also fades, which is why some vaccines need boosters.",
        "The word vaccine derives from vacca, Latin for cow.",
    ]
    .map(String::from)
    .to_vec();
    // Cosine scores from retrieval; used only if the model output is
    // unusable and the engine falls back to retrieval order.
    let retrieval_scores = [0.81, 0.78, 0.64, 0.52];

    let prompts = PromptSet::default();
    println!("prompt head:");
    for line in prompts.one_turn.lines().take(4) {
        println!("  | {}", line.trim());
    }
    println!("  | ...\n");

    // Reproduce the model's arithmetic for candidate 2 so the reported
    // number is legible: relevance 9 plus half the secondary total.
    let secondary: IndexMap<String, f64> = SECONDARY_CRITERIA
        .iter()
        .map(|name| name.to_string())
        .zip([5.0, 3.0, 5.0, 4.0, 1.0])
        .collect();
    let final_score = composite_score(9.0, &secondary, &default_weights())?;
    println!(
        "candidate 2 by hand: relevance 9, secondary {:?} -> final score {}",
        secondary.values().collect::<Vec<_>>(),
        final_score
    );

    // The scripted reply reports that final score per document and omits
    // candidate 4 entirely (its relevance sits under the floor of 3).
    let reply = "Doc: 2, Relevance: 18\nDoc: 3, Relevance: 9.5\nDoc: 1, Relevance: 6";
    let outcome = rerank_one_turn(
        &gateway_replying(reply),
        &prompts,
        query,
        &contexts,
        3,
        &retrieval_scores,
    )?;
    println!("\nmodel reply:\n{reply}\n\nparsed ranking (best first):");
    for r in &outcome.ranking {
        println!("  candidate {} at final score {:>4}  {}", r.doc, r.score, &contexts[r.doc - 1][..40]);
    }
    assert_eq!(outcome.llm_calls, 1);
    assert!(!outcome.fallback_used);

    // An empty reply is a legitimate verdict: nothing met the relevance
    // floor, so generation proceeds without context.
    let empty = rerank_one_turn(
        &gateway_replying("   \n"),
        &prompts,
        query,
        &contexts,
        3,
        &retrieval_scores,
    )?;
    println!(
        "\nwhitespace-only reply -> {} candidates kept, fallback_used = {}",
        empty.ranking.len(),
        empty.fallback_used
    );

    // Unusable text is re-asked once, then the engine falls back to
    // retrieval order rather than failing the question.
    let garbage = rerank_one_turn(
        &gateway_replying("I would rather discuss the weather."),
        &prompts,
        query,
        &contexts,
        3,
        &retrieval_scores,
    )?;
    println!(
        "\ngarbage reply twice -> fallback to retrieval order {:?} after {} calls",
        garbage.ranking.iter().map(|r| r.doc).collect::<Vec<_>>(),
        garbage.llm_calls
    );
    for w in &garbage.warnings {
        println!("  warning: {w}");
    }
    Ok(())
}
