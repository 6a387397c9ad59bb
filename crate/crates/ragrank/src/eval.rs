//! LLM-as-judge metrics and aggregate statistics.
//!
//! Two judged metrics: answer similarity grades a generated answer
//! against the reference on a 0-5 semantic rubric; retrieval precision
//! asks, per selected context, whether the passage is relevant to the
//! question and averages the binary verdicts. A question whose pipeline
//! selected no contexts has undefined precision, reported as null: a
//! zero would claim the contexts were judged irrelevant when none were
//! judged at all. Both judges run on the evaluator role, which the
//! harness requires to be a different backend-model pair than the
//! generator so a model never grades its own answers.
//!
//! Aggregation over repeated runs reports sample mean, sample standard
//! deviation, and a 95% confidence interval from the Student-t
//! distribution with n - 1 degrees of freedom.

use regex::Regex;
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::sync::OnceLock;
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, Role};
use crate::prompts::PromptSet;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("judge template error: {0}")]
    Template(String),
    #[error("{metric} judge reply unparseable twice; last reply: {last:?}")]
    JudgeUnparseable { metric: &'static str, last: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn render_judge(
    template: &str,
    substitutions: &[(&str, &str)],
) -> Result<String, EvalError> {
    let mut rendered = template.to_string();
    for (marker, value) in substitutions {
        if !rendered.contains(marker) {
            return Err(EvalError::Template(format!("template lacks {marker}")));
        }
        rendered = rendered.replace(marker, value);
    }
    Ok(rendered)
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").unwrap())
}

/// First number in `text` that lies within `[lo, hi]`, if any. Judges
/// are told to reply with the bare score, but models pad; scanning for
/// the first in-range number tolerates "Score: 4" and "4/5" alike.
fn first_in_range(text: &str, lo: f64, hi: f64) -> Option<f64> {
    number_re()
        .find_iter(text)
        .filter_map(|m| m.as_str().parse::<f64>().ok())
        .find(|v| (lo..=hi).contains(v))
}

/// Grades the generated answer against the reference on the 0-5
/// similarity rubric. An unparseable judge reply is re-asked once; two
/// failures are an error, and the harness excludes the run record.
pub fn judge_answer_similarity(
    gateway: &Gateway,
    prompts: &PromptSet,
    question: &str,
    reference_answer: &str,
    generated_answer: &str,
) -> Result<f64, EvalError> {
    let prompt = render_judge(
        &prompts.answer_similarity,
        &[
            ("{question}", question),
            ("{reference_answer}", reference_answer),
            ("{generated_answer}", generated_answer),
        ],
    )?;
    let mut last = String::new();
    for _ in 0..2 {
        let reply = gateway.complete_text(Role::Evaluator, &prompt)?;
        if let Some(score) = first_in_range(&reply.text, 0.0, 5.0) {
            return Ok(score);
        }
        log::warn!("similarity judge reply had no score in [0, 5]; asking again");
        last = reply.text;
    }
    Err(EvalError::JudgeUnparseable {
        metric: "answer similarity",
        last,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrecisionOutcome {
    /// Fraction of judged contexts found relevant; `None` when nothing
    /// could be judged (no contexts, or every verdict was unparseable).
    pub precision: Option<f64>,
    pub judged: usize,
    pub relevant: usize,
    pub warnings: Vec<String>,
}

fn yes_no_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap())
}

/// Judges each selected context for relevance to the question and
/// averages the binary verdicts. A context whose verdict is unparseable
/// after one re-ask drops out of the denominator with a warning rather
/// than failing the whole record; losing one verdict should not discard
/// the others.
pub fn judge_retrieval_precision(
    gateway: &Gateway,
    prompts: &PromptSet,
    question: &str,
    contexts: &[String],
) -> Result<PrecisionOutcome, EvalError> {
    let mut outcome = PrecisionOutcome::default();
    if contexts.is_empty() {
        outcome
            .warnings
            .push("no contexts were selected; retrieval precision is undefined".into());
        return Ok(outcome);
    }
    for (i, context) in contexts.iter().enumerate() {
        let prompt = render_judge(
            &prompts.retrieval_precision,
            &[("{question}", question), ("{context}", context)],
        )?;
        let mut verdict = None;
        for _ in 0..2 {
            let reply = gateway.complete_text(Role::Evaluator, &prompt)?;
            if let Some(m) = yes_no_re().find(&reply.text) {
                verdict = Some(m.as_str().eq_ignore_ascii_case("yes"));
                break;
            }
            log::warn!("precision judge reply had no yes/no; asking again");
        }
        match verdict {
            Some(relevant) => {
                outcome.judged += 1;
                if relevant {
                    outcome.relevant += 1;
                }
            }
            None => outcome.warnings.push(format!(
                "context {} verdict unparseable twice; dropped from the precision denominator",
                i + 1
            )),
        }
    }
    if outcome.judged > 0 {
        outcome.precision = Some(outcome.relevant as f64 / outcome.judged as f64);
    } else {
        outcome
            .warnings
            .push("every verdict was unparseable; retrieval precision is undefined".into());
    }
    Ok(outcome)
}

/// Overall quality for one run: answer similarity scaled by retrieval
/// precision. Undefined precision propagates to an undefined composite.
pub fn quality_composite(answer_similarity: f64, retrieval_precision: Option<f64>) -> Option<f64> {
    retrieval_precision.map(|p| answer_similarity * p)
}

/// Sample statistics over repeated measurements.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for n = 1.
    pub std_dev: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

/// Mean, sample standard deviation, and Student-t 95% confidence
/// interval (`mean ± t_{0.975, n-1} * std / sqrt(n)`). A single
/// observation gets a degenerate interval at the mean; no observations
/// aggregate to `None`.
pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some(Aggregate {
            n,
            mean,
            std_dev: 0.0,
            ci95_low: mean,
            ci95_high: mean,
        });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std_dev = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid t distribution for n >= 2")
        .inverse_cdf(0.975);
    let half_width = t * std_dev / (n as f64).sqrt();
    Some(Aggregate {
        n,
        mean,
        std_dev,
        ci95_low: mean - half_width,
        ci95_high: mean + half_width,
    })
}
