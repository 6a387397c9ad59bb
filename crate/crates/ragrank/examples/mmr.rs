//! Maximal marginal relevance on a hand-built instance, swept over
//! lambda. Candidates 1 and 2 are near-duplicates close to the query;
//! candidate 3 is less relevant but covers different ground. Watch the
//! second pick flip from the duplicate to the diverse document as lambda
//! drops. Run with `cargo run --example mmr`.

use ragrank::rerank::rerank_mmr;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let query = [1.0, 0.0, 0.0];
    let ids: Vec<String> = ["report-2021", "report-2021-mirror", "field-survey"]
        .map(String::from)
        .to_vec();
    let vectors = vec![
        vec![0.95, 0.10, 0.00],
        vec![0.95, 0.12, 0.00],
        vec![0.80, 0.00, 0.60],
    ];

    println!("{:<8} picks (selection-time objective)", "lambda");
    for lambda in [1.0, 0.9, 0.5, 0.0] {
        let ranking = rerank_mmr(&query, &vectors, &ids, lambda, 3)?;
        let picks: Vec<String> = ranking
            .iter()
            .map(|r| format!("{} ({:+.3})", ids[r.doc - 1], r.score))
            .collect();
        println!("{:<8} {}", lambda, picks.join("  ->  "));
    }

    // The first pick ignores lambda: with nothing selected yet there is
    // no redundancy to trade against, so it is always the most
    // query-similar candidate. Later objectives mix relevance against
    // the max similarity to anything already chosen, which is why their
    // scores are not comparable across positions.
    let half = rerank_mmr(&query, &vectors, &ids, 0.5, 3)?;
    let full = rerank_mmr(&query, &vectors, &ids, 1.0, 3)?;
    assert_eq!(half[0].doc, full[0].doc);
    println!(
        "\nfirst pick is {} at every lambda; at 0.5 the duplicate drops to last",
        ids[half[0].doc - 1]
    );
    Ok(())
}
