//! The same rerank-then-generate loop as the mock examples, but against
//! a real chat-completions endpoint. Needs OPENAI_API_KEY; exits quietly
//! without it so CI can run every example unconditionally. Override the
//! endpoint with RAGRANK_BASE_URL and the model with RAGRANK_MODEL.
//!
//! OPENAI_API_KEY=... cargo run --example live_smoke

use std::sync::Arc;

use ragrank::gateway::{ChatBackend, Gateway, HttpChatBackend, Role};
use ragrank::generate::{synthesize_answer, GenerationConfig};
use ragrank::prompts::PromptSet;
use ragrank::rerank::{generate_rerank_prompt, rerank_one_turn};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let Ok(key) = std::env::var("OPENAI_API_KEY") else {
        println!("OPENAI_API_KEY is not set; skipping the live smoke example");
        return Ok(());
    };
    let base =
        std::env::var("RAGRANK_BASE_URL").unwrap_or_else(|_| "https://api.openai.com".into());
    let model = std::env::var("RAGRANK_MODEL").unwrap_or_else(|_| "gpt-4o-mini".into());
    println!("endpoint {base}, model {model}\n");

    let backend: Arc<dyn ChatBackend> = Arc::new(HttpChatBackend::new(&base, Some(key)));
    let gateway = Gateway::builder()
        .bind(Role::Generator, Arc::clone(&backend), &model)
        .bind(Role::Reranker, Arc::clone(&backend), &model)
        .bind(Role::PromptGenerator, backend, &model)
        .build();
    let prompts = PromptSet::default();

    let question = "Which planet in the solar system has the strongest surface winds?";
    let contexts = vec![
        "Neptune's winds are the fastest recorded in the solar system, reaching 2100 km/h."
            .to_string(),
        "Mars experiences planet-wide dust storms but its thin air carries little force."
            .to_string(),
        "Venus rotates slowly while its upper atmosphere super-rotates every four days."
            .to_string(),
        "Jupiter's Great Red Spot is an anticyclonic storm larger than Earth.".to_string(),
    ];
    let scores = vec![0.9, 0.8, 0.7, 0.6];

    println!("question: {question}");
    let outcome = rerank_one_turn(&gateway, &prompts, question, &contexts, 3, &scores)?;
    println!("\none-turn ranking ({} call):", outcome.llm_calls);
    for r in &outcome.ranking {
        println!("  candidate {} at {}: {}", r.doc, r.score, contexts[r.doc - 1]);
    }
    for w in &outcome.warnings {
        println!("  warning: {w}");
    }

    let selected: Vec<String> = outcome
        .ranking
        .iter()
        .map(|r| contexts[r.doc - 1].clone())
        .collect();
    let answer = synthesize_answer(
        &gateway,
        &prompts,
        question,
        &selected,
        &GenerationConfig::default(),
    )?;
    println!("\nanswer ({} chars): {}", answer.chars, answer.text.trim());

    let generated = generate_rerank_prompt(&gateway, &prompts.two_turn_meta, question)?;
    if generated.fell_back {
        println!("\nprompt generation fell back to the fixed template");
    } else {
        println!(
            "\ngenerated query-specific rerank prompt ({} chars), first lines:",
            generated.text.len()
        );
        for line in generated.text.lines().take(5) {
            println!("  | {line}");
        }
    }
    Ok(())
}
