//! Document ingestion and token-window chunking.
//!
//! Documents come from one of three places: a directory of `.txt` files,
//! a manifest JSON that points at files on disk, or a corpus JSON with
//! inline bodies (the format written by [`save_corpus`]). Chunking slides
//! a fixed-size token window over each document with a configurable
//! overlap, so a window of 2000 tokens with overlap 200 advances 1800
//! tokens per step. Chunk boundaries are token indices, and chunk text is
//! the exact byte range of the document covered by those tokens.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid corpus file {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("duplicate document id {0:?}")]
    DuplicateDocId(String),
    #[error("document {path} has an empty body")]
    EmptyDocument { path: PathBuf },
    #[error("chunk overlap {overlap} must be smaller than chunk size {size}, and size must be positive")]
    InvalidChunking { size: usize, overlap: usize },
}

/// A source document prior to chunking.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SourceDocument {
    pub doc_id: String,
    pub title: String,
    pub body: String,
}

/// A contiguous token window of one document.
///
/// `token_start..token_end` are indices into the document's token
/// sequence; `text` is the document byte range spanned by those tokens,
/// so overlapping chunks share their boundary text verbatim.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub title: String,
    pub text: String,
    pub token_start: usize,
    pub token_end: usize,
}

/// Byte range of a single token within its source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

/// Splits text into token byte ranges. Implementations must be
/// deterministic: the same text always yields the same spans.
pub trait Tokenizer: Send + Sync {
    fn spans(&self, text: &str) -> Vec<TokenSpan>;

    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        self.spans(text)
            .into_iter()
            .map(|s| &text[s.start..s.end])
            .collect()
    }
}

/// Default tokenizer: alphanumeric runs are one token, every other
/// non-whitespace character is a token of its own.
#[derive(Debug, Default, Clone, Copy)]
pub struct WordTokenizer;

impl Tokenizer for WordTokenizer {
    fn spans(&self, text: &str) -> Vec<TokenSpan> {
        let mut spans = Vec::new();
        let mut run_start: Option<usize> = None;
        for (i, ch) in text.char_indices() {
            if ch.is_alphanumeric() {
                if run_start.is_none() {
                    run_start = Some(i);
                }
                continue;
            }
            if let Some(start) = run_start.take() {
                spans.push(TokenSpan { start, end: i });
            }
            if !ch.is_whitespace() {
                spans.push(TokenSpan {
                    start: i,
                    end: i + ch.len_utf8(),
                });
            }
        }
        if let Some(start) = run_start {
            spans.push(TokenSpan {
                start,
                end: text.len(),
            });
        }
        spans
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct ChunkingConfig {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig {
            chunk_size: 2000,
            overlap: 200,
        }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.chunk_size == 0 || self.overlap >= self.chunk_size {
            return Err(CorpusError::InvalidChunking {
                size: self.chunk_size,
                overlap: self.overlap,
            });
        }
        Ok(())
    }

    fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }
}

/// Splits a document into overlapping token windows.
///
/// Every window except possibly the last has exactly `chunk_size`
/// tokens; consecutive windows share `overlap` tokens. A document with
/// no tokens yields no chunks. Chunk ids are `"<doc_id>#<index>"` with a
/// zero-padded index so lexicographic order matches chunk order.
pub fn split_into_chunks(
    doc: &SourceDocument,
    cfg: &ChunkingConfig,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Chunk>, CorpusError> {
    cfg.validate()?;
    let spans = tokenizer.spans(&doc.body);
    let mut chunks = Vec::new();
    if spans.is_empty() {
        return Ok(chunks);
    }
    let mut start = 0usize;
    loop {
        let end = (start + cfg.chunk_size).min(spans.len());
        let byte_start = spans[start].start;
        let byte_end = spans[end - 1].end;
        chunks.push(Chunk {
            chunk_id: format!("{}#{:05}", doc.doc_id, chunks.len()),
            doc_id: doc.doc_id.clone(),
            title: doc.title.clone(),
            text: doc.body[byte_start..byte_end].to_string(),
            token_start: start,
            token_end: end,
        });
        if end == spans.len() {
            break;
        }
        start += cfg.stride();
    }
    Ok(chunks)
}

/// Number of chunks [`split_into_chunks`] produces for a document of
/// `token_count` tokens: `max(1, ceil((T - overlap) / (size - overlap)))`
/// for nonempty documents, 0 otherwise.
pub fn expected_chunk_count(token_count: usize, cfg: &ChunkingConfig) -> usize {
    if token_count == 0 {
        return 0;
    }
    let stride = cfg.stride();
    let numer = token_count.saturating_sub(cfg.overlap);
    std::cmp::max(1, numer.div_ceil(stride))
}

// --- loading and saving ---

#[derive(Deserialize)]
struct RawEntry {
    doc_id: String,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    body: Option<String>,
    #[serde(default)]
    path: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    documents: Vec<SourceDocument>,
}

/// Loads source documents from `path`.
///
/// Accepts a directory of `.txt` files (document id and title are the
/// file stem), or a JSON file holding either a bare array of entries or
/// `{"documents": [...]}`. Each entry carries `doc_id`, optional
/// `title`, and exactly one of `body` (inline text) or `path` (resolved
/// relative to the JSON file). Documents are returned sorted by id;
/// duplicate ids and empty bodies are errors.
pub fn load_corpus(path: &Path) -> Result<Vec<SourceDocument>, CorpusError> {
    let meta = fs::metadata(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut docs = if meta.is_dir() {
        load_dir(path)?
    } else {
        load_json(path)?
    };
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let mut seen = BTreeSet::new();
    for doc in &docs {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(CorpusError::DuplicateDocId(doc.doc_id.clone()));
        }
    }
    Ok(docs)
}

fn read_body(path: &Path) -> Result<String, CorpusError> {
    let body = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if body.trim().is_empty() {
        return Err(CorpusError::EmptyDocument {
            path: path.to_path_buf(),
        });
    }
    Ok(body)
}

fn load_dir(dir: &Path) -> Result<Vec<SourceDocument>, CorpusError> {
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let p = entry.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "txt") {
            paths.push(p);
        }
    }
    paths.sort();
    let mut docs = Vec::new();
    for p in paths {
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        docs.push(SourceDocument {
            doc_id: stem.clone(),
            title: stem,
            body: read_body(&p)?,
        });
    }
    Ok(docs)
}

fn load_json(path: &Path) -> Result<Vec<SourceDocument>, CorpusError> {
    let raw = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: serde_json::Value =
        serde_json::from_str(&raw).map_err(|e| CorpusError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let entries = match value {
        serde_json::Value::Array(items) => items,
        serde_json::Value::Object(mut map) => match map.remove("documents") {
            Some(serde_json::Value::Array(items)) => items,
            _ => {
                return Err(CorpusError::Format {
                    path: path.to_path_buf(),
                    message: "expected an array or a \"documents\" array".into(),
                })
            }
        },
        _ => {
            return Err(CorpusError::Format {
                path: path.to_path_buf(),
                message: "expected an array or a \"documents\" array".into(),
            })
        }
    };
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut docs = Vec::new();
    for (i, item) in entries.into_iter().enumerate() {
        let entry: RawEntry =
            serde_json::from_value(item).map_err(|e| CorpusError::Format {
                path: path.to_path_buf(),
                message: format!("entry {i}: {e}"),
            })?;
        let body = match (entry.body, entry.path) {
            (Some(body), None) => {
                if body.trim().is_empty() {
                    return Err(CorpusError::Format {
                        path: path.to_path_buf(),
                        message: format!("document {:?} has an empty body", entry.doc_id),
                    });
                }
                body
            }
            (None, Some(rel)) => read_body(&base.join(rel))?,
            _ => {
                return Err(CorpusError::Format {
                    path: path.to_path_buf(),
                    message: format!(
                        "document {:?} must have exactly one of \"body\" or \"path\"",
                        entry.doc_id
                    ),
                })
            }
        };
        docs.push(SourceDocument {
            title: entry.title.unwrap_or_else(|| entry.doc_id.clone()),
            doc_id: entry.doc_id,
            body,
        });
    }
    Ok(docs)
}

/// Writes documents as `{"documents": [...]}` with inline bodies, the
/// self-contained format produced by the `ingest` command.
pub fn save_corpus(docs: &[SourceDocument], path: &Path) -> Result<(), CorpusError> {
    let file = CorpusFile {
        documents: docs.to_vec(),
    };
    let json = serde_json::to_string_pretty(&file).expect("corpus serialization cannot fail");
    fs::write(path, json).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(body: &str) -> SourceDocument {
        SourceDocument {
            doc_id: "d".into(),
            title: "d".into(),
            body: body.into(),
        }
    }

    #[test]
    fn tokenizer_splits_words_and_punctuation() {
        let toks = WordTokenizer.tokenize("Hello, world! x2");
        assert_eq!(toks, vec!["Hello", ",", "world", "!", "x2"]);
    }

    #[test]
    fn tokenizer_handles_multibyte_text() {
        let toks = WordTokenizer.tokenize("café — 東京です。");
        assert_eq!(toks, vec!["café", "—", "東京です", "。"]);
    }

    #[test]
    fn tokenizer_spans_index_original_bytes() {
        let text = "a, b";
        for span in WordTokenizer.spans(text) {
            assert!(text.is_char_boundary(span.start) && text.is_char_boundary(span.end));
            assert!(span.start < span.end);
        }
    }

    #[test]
    fn chunks_cover_expected_token_windows() {
        let body: String = (0..22).map(|i| format!("t{i} ")).collect();
        let cfg = ChunkingConfig {
            chunk_size: 20,
            overlap: 2,
        };
        let chunks = split_into_chunks(&doc(&body), &cfg, &WordTokenizer).unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!((chunks[0].token_start, chunks[0].token_end), (0, 20));
        assert_eq!((chunks[1].token_start, chunks[1].token_end), (18, 22));
        assert!(chunks[0].text.starts_with("t0") && chunks[0].text.ends_with("t19"));
        assert!(chunks[1].text.starts_with("t18") && chunks[1].text.ends_with("t21"));
        assert_eq!(chunks[0].chunk_id, "d#00000");
        assert_eq!(chunks[1].chunk_id, "d#00001");
    }

    #[test]
    fn exact_fit_produces_single_chunk() {
        let body: String = (0..20).map(|i| format!("t{i} ")).collect();
        let cfg = ChunkingConfig {
            chunk_size: 20,
            overlap: 2,
        };
        let chunks = split_into_chunks(&doc(&body), &cfg, &WordTokenizer).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!((chunks[0].token_start, chunks[0].token_end), (0, 20));
    }

    #[test]
    fn empty_document_yields_no_chunks() {
        let cfg = ChunkingConfig::default();
        let chunks = split_into_chunks(&doc("   \n "), &cfg, &WordTokenizer).unwrap();
        assert!(chunks.is_empty());
    }

    #[test]
    fn invalid_config_is_rejected() {
        for (size, overlap) in [(0, 0), (5, 5), (5, 9)] {
            let cfg = ChunkingConfig {
                chunk_size: size,
                overlap,
            };
            assert!(cfg.validate().is_err(), "size={size} overlap={overlap}");
        }
    }

    #[test]
    fn chunk_count_formula_matches_loop() {
        for (size, overlap) in [(2usize, 1usize), (3, 1), (5, 2), (7, 0)] {
            let cfg = ChunkingConfig {
                chunk_size: size,
                overlap,
            };
            for t in 0..=50 {
                let body: String = (0..t).map(|i| format!("w{i} ")).collect();
                let got = split_into_chunks(&doc(&body), &cfg, &WordTokenizer)
                    .unwrap()
                    .len();
                assert_eq!(
                    got,
                    expected_chunk_count(t, &cfg),
                    "T={t} size={size} overlap={overlap}"
                );
            }
        }
    }

    #[test]
    fn consecutive_chunks_share_overlap_tokens() {
        let body: String = (0..47).map(|i| format!("w{i} ")).collect();
        let cfg = ChunkingConfig {
            chunk_size: 10,
            overlap: 3,
        };
        let chunks = split_into_chunks(&doc(&body), &cfg, &WordTokenizer).unwrap();
        for pair in chunks.windows(2) {
            assert_eq!(pair[0].token_end - pair[1].token_start, 3);
        }
        assert_eq!(chunks.last().unwrap().token_end, 47);
    }

    #[test]
    fn load_corpus_from_directory_sorts_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.txt"), "second doc").unwrap();
        fs::write(dir.path().join("a.txt"), "first doc").unwrap();
        fs::write(dir.path().join("ignore.md"), "not text").unwrap();
        let docs = load_corpus(dir.path()).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].doc_id, "a");
        assert_eq!(docs[1].body, "second doc");
    }

    #[test]
    fn empty_file_is_an_error_naming_the_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("empty.txt"), "  \n").unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(err.to_string().contains("empty.txt"), "{err}");
    }

    #[test]
    fn load_corpus_accepts_manifest_with_paths() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.txt"), "referenced body").unwrap();
        let manifest = dir.path().join("manifest.json");
        fs::write(
            &manifest,
            r#"[{"doc_id": "x", "title": "Doc X", "path": "x.txt"}]"#,
        )
        .unwrap();
        let docs = load_corpus(&manifest).unwrap();
        assert_eq!(docs[0].title, "Doc X");
        assert_eq!(docs[0].body, "referenced body");
    }

    #[test]
    fn corpus_json_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("corpus.json");
        let docs = vec![
            SourceDocument {
                doc_id: "a".into(),
                title: "A".into(),
                body: "alpha".into(),
            },
            SourceDocument {
                doc_id: "b".into(),
                title: "B".into(),
                body: "beta".into(),
            },
        ];
        save_corpus(&docs, &out).unwrap();
        assert_eq!(load_corpus(&out).unwrap(), docs);
    }

    #[test]
    fn duplicate_doc_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("c.json");
        fs::write(
            &manifest,
            r#"[{"doc_id": "a", "body": "one"}, {"doc_id": "a", "body": "two"}]"#,
        )
        .unwrap();
        assert!(matches!(
            load_corpus(&manifest),
            Err(CorpusError::DuplicateDocId(id)) if id == "a"
        ));
    }
}
