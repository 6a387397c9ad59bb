//! Report emission: per-pipeline aggregates from a results file, written
//! as JSON, CSV, and a two-panel SVG scatter.
//!
//! Aggregation happens over repetitions, mirroring the repeated-runs
//! protocol: repetition r's value for a metric is the mean over that
//! pipeline's included records with repetition r, and the confidence
//! interval is computed across those per-repetition means. The quality
//! composite is the product of the similarity and precision means, one
//! scalar per pipeline.
//!
//! The report refuses incomplete grids by default: every (pipeline,
//! question, repetition) cell must hold exactly one record, so numbers
//! from different pipelines are always comparable.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{aggregate, quality_composite, Aggregate};
use crate::harness::{meta_path, read_records, HarnessError, RunProvenance, RunRecord};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot report: {0}")]
    Invalid(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Aggregated view of one pipeline's records.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PipelineReport {
    pub pipeline_id: String,
    /// All records for this pipeline, including excluded ones.
    pub records: usize,
    /// Records with errors, reported but left out of every aggregate.
    pub excluded: usize,
    /// Included records that degraded to a fallback somewhere.
    pub fallbacks: usize,
    pub answer_similarity: Option<Aggregate>,
    pub retrieval_precision: Option<Aggregate>,
    pub chars_per_second: Option<Aggregate>,
    pub end_to_end_latency_s: Option<Aggregate>,
    /// similarity mean times precision mean; the quality axis.
    pub quality_composite: Option<f64>,
}

/// The whole report: provenance plus one entry per pipeline, in
/// first-seen record order.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<RunProvenance>,
    /// RFC 3339 emission time; absent when the caller wants
    /// byte-reproducible reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
    pub total_records: usize,
    pub excluded_records: usize,
    pub questions: usize,
    pub repetitions: u32,
    pub pipelines: Vec<PipelineReport>,
}

/// Mean of each repetition's included values, ascending by repetition.
/// Repetitions where the metric is null throughout contribute nothing.
fn per_repetition_means<F>(records: &[&RunRecord], metric: F) -> Vec<f64>
where
    F: Fn(&RunRecord) -> Option<f64>,
{
    let mut by_rep: IndexMap<u32, Vec<f64>> = IndexMap::new();
    for record in records {
        if record.is_excluded() {
            continue;
        }
        if let Some(value) = metric(record) {
            by_rep.entry(record.repetition).or_default().push(value);
        }
    }
    by_rep.sort_keys();
    by_rep
        .values()
        .map(|vs| vs.iter().sum::<f64>() / vs.len() as f64)
        .collect()
}

fn check_grid(records: &[RunRecord]) -> Result<(usize, u32), ReportError> {
    let pipelines: BTreeSet<&str> = records.iter().map(|r| r.pipeline_id.as_str()).collect();
    let questions: BTreeSet<&str> = records.iter().map(|r| r.question_id.as_str()).collect();
    let reps = records.iter().map(|r| r.repetition).max().unwrap_or(0);
    let expected = pipelines.len() * questions.len() * reps as usize;
    let mut keys = BTreeSet::new();
    for record in records {
        if !keys.insert(record.key()) {
            return Err(ReportError::Invalid(format!(
                "duplicate record for pipeline {:?}, question {:?}, repetition {}",
                record.pipeline_id, record.question_id, record.repetition
            )));
        }
    }
    if records.len() != expected {
        return Err(ReportError::Invalid(format!(
            "incomplete results: {} pipelines x {} questions x {} repetitions \
             needs {} records but the file holds {}; finish the run first \
             (or pass allow_partial)",
            pipelines.len(),
            questions.len(),
            reps,
            expected,
            records.len()
        )));
    }
    Ok((questions.len(), reps))
}

/// Builds the aggregate summary from raw records. With `allow_partial`
/// false, an incomplete or duplicated run grid is an error.
pub fn summarize(
    records: &[RunRecord],
    provenance: Option<RunProvenance>,
    generated_at: Option<String>,
    allow_partial: bool,
) -> Result<ReportSummary, ReportError> {
    if records.is_empty() {
        return Err(ReportError::Invalid("no records to report".into()));
    }
    let (questions, repetitions) = if allow_partial {
        let questions: BTreeSet<&str> =
            records.iter().map(|r| r.question_id.as_str()).collect();
        let reps = records.iter().map(|r| r.repetition).max().unwrap_or(0);
        (questions.len(), reps)
    } else {
        check_grid(records)?
    };

    let mut by_pipeline: IndexMap<&str, Vec<&RunRecord>> = IndexMap::new();
    for record in records {
        by_pipeline
            .entry(record.pipeline_id.as_str())
            .or_default()
            .push(record);
    }

    let mut pipelines = Vec::with_capacity(by_pipeline.len());
    for (pipeline_id, group) in &by_pipeline {
        let excluded = group.iter().filter(|r| r.is_excluded()).count();
        let fallbacks = group
            .iter()
            .filter(|r| !r.is_excluded() && r.fallback_used)
            .count();
        let similarity = aggregate(&per_repetition_means(group, |r| r.answer_similarity));
        let precision = aggregate(&per_repetition_means(group, |r| r.retrieval_precision));
        let cps = aggregate(&per_repetition_means(group, |r| {
            Some(r.chars_per_second)
        }));
        let latency = aggregate(&per_repetition_means(group, |r| {
            Some(r.end_to_end_latency_s)
        }));
        let quality = match similarity {
            Some(s) => quality_composite(s.mean, precision.map(|p| p.mean)),
            None => None,
        };
        pipelines.push(PipelineReport {
            pipeline_id: pipeline_id.to_string(),
            records: group.len(),
            excluded,
            fallbacks,
            answer_similarity: similarity,
            retrieval_precision: precision,
            chars_per_second: cps,
            end_to_end_latency_s: latency,
            quality_composite: quality,
        });
    }

    Ok(ReportSummary {
        provenance,
        generated_at,
        total_records: records.len(),
        excluded_records: records.iter().filter(|r| r.is_excluded()).count(),
        questions,
        repetitions,
        pipelines,
    })
}

fn opt_cell(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn write_csv(summary: &ReportSummary, path: &Path) -> Result<(), ReportError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "pipeline_id",
        "records",
        "excluded",
        "fallbacks",
        "answer_similarity_mean",
        "answer_similarity_ci95_low",
        "answer_similarity_ci95_high",
        "retrieval_precision_mean",
        "retrieval_precision_ci95_low",
        "retrieval_precision_ci95_high",
        "chars_per_second_mean",
        "chars_per_second_ci95_low",
        "chars_per_second_ci95_high",
        "quality_composite",
    ])?;
    for p in &summary.pipelines {
        writer.write_record([
            p.pipeline_id.clone(),
            p.records.to_string(),
            p.excluded.to_string(),
            p.fallbacks.to_string(),
            opt_cell(p.answer_similarity.map(|a| a.mean)),
            opt_cell(p.answer_similarity.map(|a| a.ci95_low)),
            opt_cell(p.answer_similarity.map(|a| a.ci95_high)),
            opt_cell(p.retrieval_precision.map(|a| a.mean)),
            opt_cell(p.retrieval_precision.map(|a| a.ci95_low)),
            opt_cell(p.retrieval_precision.map(|a| a.ci95_high)),
            opt_cell(p.chars_per_second.map(|a| a.mean)),
            opt_cell(p.chars_per_second.map(|a| a.ci95_low)),
            opt_cell(p.chars_per_second.map(|a| a.ci95_high)),
            opt_cell(p.quality_composite),
        ])?;
    }
    writer.flush().map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

// --- scatter plot ---

struct PanelPoint {
    label: String,
    x: f64,
    y: f64,
    x_err: Option<(f64, f64)>,
    y_err: Option<(f64, f64)>,
}

struct Panel {
    title: String,
    x_label: String,
    y_label: String,
    points: Vec<PanelPoint>,
}

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 360.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_B: f64 = 46.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_R: f64 = 18.0;

fn float_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.08;
    (lo - pad, hi + pad)
}

fn render_panel(svg: &mut String, panel: &Panel, origin_x: f64) {
    let plot_w = PANEL_W - MARGIN_L - MARGIN_R;
    let plot_h = PANEL_H - MARGIN_T - MARGIN_B;
    let (x_lo, x_hi) = axis_range(panel.points.iter().flat_map(|p| {
        let (a, b) = p.x_err.unwrap_or((p.x, p.x));
        [p.x, a, b]
    }));
    let (y_lo, y_hi) = axis_range(panel.points.iter().flat_map(|p| {
        let (a, b) = p.y_err.unwrap_or((p.y, p.y));
        [p.y, a, b]
    }));
    let sx = |v: f64| origin_x + MARGIN_L + (v - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |v: f64| MARGIN_T + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h;

    let left = origin_x + MARGIN_L;
    let top = MARGIN_T;
    let bottom = MARGIN_T + plot_h;
    let _ = write!(
        svg,
        r##"<text x="{tx:.1}" y="18" text-anchor="middle" class="title">{title}</text>
<rect x="{left:.1}" y="{top:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#888"/>
<text x="{tx:.1}" y="{xl:.1}" text-anchor="middle" class="axis">{x_label}</text>
<text x="{yl_x:.1}" y="{yl_y:.1}" text-anchor="middle" class="axis" transform="rotate(-90 {yl_x:.1} {yl_y:.1})">{y_label}</text>
"##,
        tx = origin_x + PANEL_W / 2.0,
        title = panel.title,
        w = plot_w,
        h = plot_h,
        xl = PANEL_H - 10.0,
        x_label = panel.x_label,
        yl_x = origin_x + 16.0,
        yl_y = MARGIN_T + plot_h / 2.0,
        y_label = panel.y_label,
    );
    for (lo, hi, vertical) in [(x_lo, x_hi, false), (y_lo, y_hi, true)] {
        for frac in [0.0, 0.5, 1.0] {
            let v = lo + (hi - lo) * frac;
            if vertical {
                let y = sy(v);
                let _ = writeln!(
                    svg,
                    "<line x1=\"{l:.1}\" y1=\"{y:.1}\" x2=\"{l2:.1}\" y2=\"{y:.1}\" stroke=\"#888\"/>\
                     <text x=\"{t:.1}\" y=\"{ty:.1}\" text-anchor=\"end\" class=\"tick\">{lab}</text>",
                    l = left - 4.0,
                    l2 = left,
                    t = left - 7.0,
                    ty = y + 4.0,
                    lab = float_label(v),
                );
            } else {
                let x = sx(v);
                let _ = writeln!(
                    svg,
                    "<line x1=\"{x:.1}\" y1=\"{b:.1}\" x2=\"{x:.1}\" y2=\"{b2:.1}\" stroke=\"#888\"/>\
                     <text x=\"{x:.1}\" y=\"{t:.1}\" text-anchor=\"middle\" class=\"tick\">{lab}</text>",
                    b = bottom,
                    b2 = bottom + 4.0,
                    t = bottom + 16.0,
                    lab = float_label(v),
                );
            }
        }
    }
    for point in &panel.points {
        let px = sx(point.x);
        let py = sy(point.y);
        if let Some((lo, hi)) = point.x_err {
            let _ = writeln!(
                svg,
                "<line x1=\"{a:.1}\" y1=\"{py:.1}\" x2=\"{b:.1}\" y2=\"{py:.1}\" stroke=\"#4477aa\"/>",
                a = sx(lo),
                b = sx(hi),
            );
        }
        if let Some((lo, hi)) = point.y_err {
            let _ = writeln!(
                svg,
                "<line x1=\"{px:.1}\" y1=\"{a:.1}\" x2=\"{px:.1}\" y2=\"{b:.1}\" stroke=\"#4477aa\"/>",
                a = sy(lo),
                b = sy(hi),
            );
        }
        let _ = writeln!(
            svg,
            "<circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"4\" fill=\"#4477aa\"/>\
             <text x=\"{lx:.1}\" y=\"{ly:.1}\" class=\"point\">{label}</text>",
            lx = px + 6.0,
            ly = py - 6.0,
            label = point.label,
        );
    }
}

/// Renders the two scatter panels: precision against similarity with
/// both confidence intervals, and the quality composite against
/// characters per second. Pipelines missing a panel's metrics are left
/// off that panel.
pub fn render_scatter_svg(summary: &ReportSummary) -> String {
    let tradeoff = Panel {
        title: "Quality vs. inference speed".into(),
        x_label: "generated chars per second".into(),
        y_label: "similarity x precision".into(),
        points: summary
            .pipelines
            .iter()
            .filter_map(|p| {
                Some(PanelPoint {
                    label: p.pipeline_id.clone(),
                    x: p.chars_per_second?.mean,
                    y: p.quality_composite?,
                    x_err: p.chars_per_second.map(|a| (a.ci95_low, a.ci95_high)),
                    y_err: None,
                })
            })
            .collect(),
    };
    let bottleneck = Panel {
        title: "Precision vs. similarity".into(),
        x_label: "answer similarity (0-5)".into(),
        y_label: "retrieval precision".into(),
        points: summary
            .pipelines
            .iter()
            .filter_map(|p| {
                let s = p.answer_similarity?;
                let r = p.retrieval_precision?;
                Some(PanelPoint {
                    label: p.pipeline_id.clone(),
                    x: s.mean,
                    y: r.mean,
                    x_err: Some((s.ci95_low, s.ci95_high)),
                    y_err: Some((r.ci95_low, r.ci95_high)),
                })
            })
            .collect(),
    };
    let total_w = PANEL_W * 2.0;
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {total_w:.0} {PANEL_H:.0}" font-family="sans-serif">
<style>.title{{font-size:14px}}.axis{{font-size:12px}}.tick{{font-size:10px}}.point{{font-size:11px}}</style>
"#
    );
    render_panel(&mut svg, &bottleneck, 0.0);
    render_panel(&mut svg, &tradeoff, PANEL_W);
    svg.push_str("</svg>\n");
    svg
}

/// Reads a results file (plus its provenance sidecar if present) and
/// writes `summary.json`, `report.csv`, and `scatter.svg` into
/// `out_dir`.
pub fn write_report(
    results_path: &Path,
    out_dir: &Path,
    generated_at: Option<String>,
    allow_partial: bool,
) -> Result<ReportSummary, ReportError> {
    let records = read_records(results_path)?;
    let meta = meta_path(results_path);
    let provenance: Option<RunProvenance> = if meta.exists() {
        let raw = fs::read_to_string(&meta).map_err(|source| ReportError::Io {
            path: meta.clone(),
            source,
        })?;
        Some(
            serde_json::from_str(&raw).map_err(|e| {
                ReportError::Invalid(format!("bad provenance sidecar {}: {e}", meta.display()))
            })?,
        )
    } else {
        None
    };
    let summary = summarize(&records, provenance, generated_at, allow_partial)?;
    fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let json_path = out_dir.join("summary.json");
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    fs::write(&json_path, json).map_err(|source| ReportError::Io {
        path: json_path.clone(),
        source,
    })?;
    write_csv(&summary, &out_dir.join("report.csv"))?;
    let svg_path = out_dir.join("scatter.svg");
    fs::write(&svg_path, render_scatter_svg(&summary)).map_err(|source| ReportError::Io {
        path: svg_path.clone(),
        source,
    })?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(
        pipeline: &str,
        question: &str,
        rep: u32,
        similarity: Option<f64>,
        precision: Option<f64>,
        cps: f64,
    ) -> RunRecord {
        RunRecord {
            pipeline_id: pipeline.into(),
            question_id: question.into(),
            repetition: rep,
            answer_similarity: similarity,
            retrieval_precision: precision,
            end_to_end_latency_s: 1.0,
            answer_chars: (cps as usize).max(1),
            chars_per_second: cps,
            rerank_llm_calls: 1,
            fallback_used: false,
            contexts_used: vec!["d#00000".into()],
            answer: Some("answer".into()),
            warnings: vec![],
            errors: vec![],
        }
    }

    #[test]
    fn aggregates_are_over_per_repetition_means() {
        // Rep 1 questions score 4 and 2 (mean 3); rep 2 scores 5 and 1
        // (mean 3). Aggregate sees [3, 3]: mean 3, zero spread.
        let records = vec![
            record("a", "q1", 1, Some(4.0), Some(1.0), 10.0),
            record("a", "q2", 1, Some(2.0), Some(0.5), 20.0),
            record("a", "q1", 2, Some(5.0), Some(1.0), 10.0),
            record("a", "q2", 2, Some(1.0), Some(0.5), 20.0),
        ];
        let summary = summarize(&records, None, None, false).unwrap();
        let p = &summary.pipelines[0];
        let sim = p.answer_similarity.unwrap();
        assert_eq!(sim.n, 2);
        assert!((sim.mean - 3.0).abs() < 1e-12);
        assert!((sim.std_dev - 0.0).abs() < 1e-12);
        let prec = p.retrieval_precision.unwrap();
        assert!((prec.mean - 0.75).abs() < 1e-12);
        let quality = p.quality_composite.unwrap();
        assert!((quality - 3.0 * 0.75).abs() < 1e-12);
        let cps = p.chars_per_second.unwrap();
        assert!((cps.mean - 15.0).abs() < 1e-12);
    }

    #[test]
    fn excluded_records_are_counted_but_not_aggregated() {
        let mut bad = record("a", "q1", 1, Some(0.0), Some(0.0), 0.0);
        bad.errors.push("generate: boom".into());
        let records = vec![bad, record("a", "q1", 2, Some(4.0), Some(1.0), 8.0)];
        let summary = summarize(&records, None, None, false).unwrap();
        let p = &summary.pipelines[0];
        assert_eq!(p.records, 2);
        assert_eq!(p.excluded, 1);
        let sim = p.answer_similarity.unwrap();
        assert_eq!(sim.n, 1);
        assert!((sim.mean - 4.0).abs() < 1e-12);
        assert_eq!(summary.excluded_records, 1);
    }

    #[test]
    fn null_precision_propagates_as_empty_csv_cells() {
        let records = [
            record("a", "q1", 1, Some(4.0), None, 8.0),
            record("a", "q1", 2, Some(4.0), None, 8.0),
        ];
        let dir = tempfile::tempdir().unwrap();
        let results = dir.path().join("r.jsonl");
        let lines: Vec<String> = records
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        fs::write(&results, lines.join("\n") + "\n").unwrap();
        let summary = write_report(&results, &dir.path().join("out"), None, false).unwrap();
        assert!(summary.pipelines[0].retrieval_precision.is_none());
        assert!(summary.pipelines[0].quality_composite.is_none());

        let csv_text = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
        let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
        let row = reader.records().next().unwrap().unwrap();
        let header: Vec<String> = csv_text.lines().next().unwrap().split(',').map(String::from).collect();
        let col = |name: &str| header.iter().position(|h| h == name).unwrap();
        assert_eq!(&row[col("retrieval_precision_mean")], "");
        assert_eq!(&row[col("quality_composite")], "");
        assert_eq!(&row[col("answer_similarity_mean")], "4");
    }

    #[test]
    fn incomplete_grid_is_refused_unless_partial_allowed() {
        let records = vec![
            record("a", "q1", 1, Some(4.0), Some(1.0), 8.0),
            record("a", "q1", 2, Some(4.0), Some(1.0), 8.0),
            record("b", "q1", 1, Some(3.0), Some(1.0), 9.0),
        ];
        let err = summarize(&records, None, None, false).unwrap_err();
        assert!(err.to_string().contains("incomplete"), "{err}");
        let summary = summarize(&records, None, None, true).unwrap();
        assert_eq!(summary.pipelines.len(), 2);
    }

    #[test]
    fn duplicate_records_are_refused() {
        let records = vec![
            record("a", "q1", 1, Some(4.0), Some(1.0), 8.0),
            record("a", "q1", 1, Some(4.0), Some(1.0), 8.0),
        ];
        let err = summarize(&records, None, None, false).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn report_files_are_deterministic_and_complete() {
        let records = [
            record("a", "q1", 1, Some(4.0), Some(1.0), 8.0),
            record("a", "q1", 2, Some(5.0), Some(0.5), 9.0),
            record("b", "q1", 1, Some(3.0), Some(1.0), 20.0),
            record("b", "q1", 2, Some(2.0), Some(1.0), 22.0),
        ];
        let dir = tempfile::tempdir().unwrap();
        let results = dir.path().join("r.jsonl");
        let lines: Vec<String> = records
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        fs::write(&results, lines.join("\n") + "\n").unwrap();
        write_report(&results, &dir.path().join("one"), None, false).unwrap();
        write_report(&results, &dir.path().join("two"), None, false).unwrap();
        for name in ["summary.json", "report.csv", "scatter.svg"] {
            let one = fs::read(dir.path().join("one").join(name)).unwrap();
            let two = fs::read(dir.path().join("two").join(name)).unwrap();
            assert_eq!(one, two, "{name} differs between runs");
            assert!(!one.is_empty());
        }
        let svg = fs::read_to_string(dir.path().join("one/scatter.svg")).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(">a<") && svg.contains(">b<"));
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("one/summary.json")).unwrap())
                .unwrap();
        assert_eq!(json["pipelines"].as_array().unwrap().len(), 2);
        assert!(json.get("generated_at").is_none());
    }
}
