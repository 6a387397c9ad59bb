//! Embedding, the vector index, cosine retrieval, and the hypothetical
//! answer query transform.
//!
//! Vectors are stored as `f64` throughout. The on-disk format is a small
//! byte-exact binary layout (magic, version, embedder id, then
//! length-prefixed chunks with raw IEEE-754 bits), so save followed by
//! load reproduces every vector bit for bit; no text round-tripping is
//! involved. Retrieval is exact brute-force cosine over the whole index
//! with deterministic tie-breaking, which is the right trade at the
//! corpus sizes this engine targets (hundreds to low thousands of
//! chunks).

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::Chunk;
use crate::gateway::{EmbeddingBackend, Gateway, GatewayError, RetryPolicy, Role};
use crate::prompts::{PromptSet, QUERY_PLACEHOLDER};

/// Largest number of texts sent to an embedding backend in one request.
pub const DEFAULT_EMBED_BATCH: usize = 128;

const MAGIC: &[u8; 8] = b"RAGRKIDX";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("index format error: {0}")]
    Format(String),
    #[error("invalid index input: {0}")]
    Invalid(String),
    #[error("vector dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine similarity is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("index was built with embedder {built_with:?} but {requested:?} is configured")]
    EmbedderMismatch {
        built_with: String,
        requested: String,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Cosine similarity of two equal-length vectors. Errors on mismatched
/// dimensions or a zero-norm input rather than guessing a value.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, IndexError> {
    if a.len() != b.len() {
        return Err(IndexError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(IndexError::ZeroNorm);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Embeds `texts` in batches of at most `batch_cap`, retrying transient
/// failures per batch. Output order matches input order.
pub fn embed_texts(
    backend: &dyn EmbeddingBackend,
    retry: &RetryPolicy,
    texts: &[String],
    batch_cap: usize,
) -> Result<Vec<Vec<f64>>, GatewayError> {
    let cap = batch_cap.max(1);
    let mut out = Vec::with_capacity(texts.len());
    for batch in texts.chunks(cap) {
        let vectors = retry.run(|| backend.embed(batch))?;
        if vectors.len() != batch.len() {
            return Err(GatewayError::Protocol(format!(
                "embedding backend returned {} vectors for {} texts",
                vectors.len(),
                batch.len()
            )));
        }
        for v in &vectors {
            if v.len() != backend.dim() {
                return Err(GatewayError::Protocol(format!(
                    "embedding backend returned dimension {}, declared {}",
                    v.len(),
                    backend.dim()
                )));
            }
        }
        out.extend(vectors);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub chunk: Chunk,
    pub vector: Vec<f64>,
}

/// A retrieval hit: the chunk, its cosine score against the query, and
/// its 1-based rank in the result list.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedContext {
    pub chunk: Chunk,
    pub score: f64,
    pub rank: usize,
}

/// Immutable chunk-vector store keyed by chunk id.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    embedder_id: String,
    dim: usize,
    entries: Vec<IndexEntry>,
}

impl VectorIndex {
    /// Pairs chunks with externally computed vectors. Validates that
    /// counts match, chunk ids are unique, and every vector is finite,
    /// nonzero, and of one consistent dimension. Entries are kept sorted
    /// by chunk id.
    pub fn build(
        chunks: Vec<Chunk>,
        vectors: Vec<Vec<f64>>,
        embedder_id: &str,
    ) -> Result<Self, IndexError> {
        if chunks.len() != vectors.len() {
            return Err(IndexError::Invalid(format!(
                "{} chunks but {} vectors",
                chunks.len(),
                vectors.len()
            )));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        for (chunk, vector) in chunks.iter().zip(&vectors) {
            if vector.len() != dim {
                return Err(IndexError::DimensionMismatch {
                    left: dim,
                    right: vector.len(),
                });
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(IndexError::Invalid(format!(
                    "vector for chunk {:?} has a non-finite component",
                    chunk.chunk_id
                )));
            }
            if vector.iter().all(|v| *v == 0.0) {
                return Err(IndexError::Invalid(format!(
                    "vector for chunk {:?} is all zeros",
                    chunk.chunk_id
                )));
            }
        }
        let mut entries: Vec<IndexEntry> = chunks
            .into_iter()
            .zip(vectors)
            .map(|(chunk, vector)| IndexEntry { chunk, vector })
            .collect();
        entries.sort_by(|a, b| a.chunk.chunk_id.cmp(&b.chunk.chunk_id));
        for pair in entries.windows(2) {
            if pair[0].chunk.chunk_id == pair[1].chunk.chunk_id {
                return Err(IndexError::Invalid(format!(
                    "duplicate chunk id {:?}",
                    pair[0].chunk.chunk_id
                )));
            }
        }
        Ok(VectorIndex {
            embedder_id: embedder_id.to_string(),
            dim,
            entries,
        })
    }

    /// Embeds the chunks with `backend` and builds the index, recording
    /// the backend id for later compatibility checks.
    pub fn from_backend(
        chunks: Vec<Chunk>,
        backend: &dyn EmbeddingBackend,
        retry: &RetryPolicy,
        batch_cap: usize,
    ) -> Result<Self, IndexError> {
        let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        let vectors = embed_texts(backend, retry, &texts, batch_cap)?;
        VectorIndex::build(chunks, vectors, backend.id())
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// The stored vector for a chunk id, if present.
    pub fn vector_for(&self, chunk_id: &str) -> Option<&[f64]> {
        self.entries
            .binary_search_by(|e| e.chunk.chunk_id.as_str().cmp(chunk_id))
            .ok()
            .map(|i| self.entries[i].vector.as_slice())
    }

    /// Errors unless `id` matches the embedder the index was built with.
    /// Mixing embedders silently would make every similarity meaningless.
    pub fn ensure_embedder(&self, id: &str) -> Result<(), IndexError> {
        if self.embedder_id != id {
            return Err(IndexError::EmbedderMismatch {
                built_with: self.embedder_id.clone(),
                requested: id.to_string(),
            });
        }
        Ok(())
    }

    /// Exact top-k retrieval by cosine similarity, descending, with ties
    /// broken by ascending chunk id. Returns fewer than `k` hits when
    /// the index is smaller than `k`; an empty index logs a warning and
    /// returns no hits.
    pub fn retrieve_top_k(
        &self,
        query: &[f64],
        k: usize,
    ) -> Result<Vec<RetrievedContext>, IndexError> {
        if self.entries.is_empty() {
            log::warn!("retrieval over an empty index returns no contexts");
            return Ok(Vec::new());
        }
        if query.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                left: query.len(),
                right: self.dim,
            });
        }
        let mut scored: Vec<(f64, usize)> = Vec::with_capacity(self.entries.len());
        for (i, entry) in self.entries.iter().enumerate() {
            scored.push((cosine_similarity(query, &entry.vector)?, i));
        }
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("cosine of finite nonzero vectors is finite")
                .then_with(|| {
                    self.entries[a.1]
                        .chunk
                        .chunk_id
                        .cmp(&self.entries[b.1].chunk.chunk_id)
                })
        });
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(rank, (score, i))| RetrievedContext {
                chunk: self.entries[i].chunk.clone(),
                score,
                rank: rank + 1,
            })
            .collect())
    }

    // --- persistence ---

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let file = File::create(path).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = BufWriter::new(file);
        let io_err = |source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        };
        w.write_all(MAGIC).map_err(io_err)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io_err)?;
        write_string(&mut w, &self.embedder_id).map_err(io_err)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes())
            .map_err(io_err)?;
        for entry in &self.entries {
            let c = &entry.chunk;
            write_string(&mut w, &c.chunk_id).map_err(io_err)?;
            write_string(&mut w, &c.doc_id).map_err(io_err)?;
            write_string(&mut w, &c.title).map_err(io_err)?;
            write_string(&mut w, &c.text).map_err(io_err)?;
            w.write_all(&(c.token_start as u64).to_le_bytes()).map_err(io_err)?;
            w.write_all(&(c.token_end as u64).to_le_bytes()).map_err(io_err)?;
            for v in &entry.vector {
                w.write_all(&v.to_bits().to_le_bytes()).map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let file = File::open(path).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(IndexError::Format(format!(
                "bad magic {:?}; not an index file",
                String::from_utf8_lossy(&magic)
            )));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(IndexError::Format(format!(
                "unsupported index version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let embedder_id = read_string(&mut r)?;
        let dim = read_u32(&mut r)? as usize;
        let count = read_u64(&mut r)? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let chunk_id = read_string(&mut r)?;
            let doc_id = read_string(&mut r)?;
            let title = read_string(&mut r)?;
            let text = read_string(&mut r)?;
            let token_start = read_u64(&mut r)? as usize;
            let token_end = read_u64(&mut r)? as usize;
            let mut vector = Vec::with_capacity(dim);
            for _ in 0..dim {
                vector.push(f64::from_bits(read_u64(&mut r)?));
            }
            entries.push(IndexEntry {
                chunk: Chunk {
                    chunk_id,
                    doc_id,
                    title,
                    text,
                    token_start,
                    token_end,
                },
                vector,
            });
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(|e| IndexError::Format(e.to_string()))? != 0 {
            return Err(IndexError::Format("trailing bytes after last entry".into()));
        }
        Ok(VectorIndex {
            embedder_id,
            dim,
            entries,
        })
    }
}

fn write_string(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), IndexError> {
    r.read_exact(buf)
        .map_err(|e| IndexError::Format(format!("truncated index file: {e}")))
}

fn read_u32(r: &mut impl Read) -> Result<u32, IndexError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64, IndexError> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_string(r: &mut impl Read) -> Result<String, IndexError> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|e| IndexError::Format(format!("invalid utf-8: {e}")))
}

// --- query transform ---

#[derive(Debug, Clone, PartialEq)]
pub struct HydeOutcome {
    /// Text to embed in place of the raw question.
    pub text: String,
    /// True when the model returned nothing and the raw question was
    /// used instead.
    pub fallback_used: bool,
}

/// Hypothetical-answer retrieval transform: asks the generator role to
/// write a passage that would answer the question, and retrieves with
/// that passage's embedding instead of the question's. An empty
/// completion falls back to the raw question and flags it. End-to-end
/// latency accounting counts this call because it sits on the answer
/// path.
pub fn hyde_transform(
    query: &str,
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<HydeOutcome, GatewayError> {
    let prompt = prompts.hyde.replace(QUERY_PLACEHOLDER, query);
    let response = gateway.complete_text(Role::Generator, &prompt)?;
    if response.text.trim().is_empty() {
        log::warn!("hypothetical answer came back empty; retrieving with the raw question");
        return Ok(HydeOutcome {
            text: query.to_string(),
            fallback_used: true,
        });
    }
    Ok(HydeOutcome {
        text: response.text,
        fallback_used: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockChatBackend, MockEmbeddingBackend};
    use std::sync::Arc;

    fn chunk(id: &str, text: &str) -> Chunk {
        Chunk {
            chunk_id: id.to_string(),
            doc_id: id.split('#').next().unwrap().to_string(),
            title: "t".into(),
            text: text.to_string(),
            token_start: 0,
            token_end: 1,
        }
    }

    #[test]
    fn cosine_basics() {
        assert!((cosine_similarity(&[1.0, 0.0], &[0.0, 2.0]).unwrap()).abs() < 1e-15);
        assert!((cosine_similarity(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_similarity(&[1.0, 1.0], &[-2.0, -2.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(IndexError::ZeroNorm)
        ));
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(IndexError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn build_rejects_bad_input() {
        let c = vec![chunk("a#0", "x"), chunk("a#1", "y")];
        assert!(VectorIndex::build(c.clone(), vec![vec![1.0, 0.0]], "e").is_err());
        assert!(VectorIndex::build(
            c.clone(),
            vec![vec![1.0, 0.0], vec![f64::NAN, 0.0]],
            "e"
        )
        .is_err());
        assert!(VectorIndex::build(c.clone(), vec![vec![1.0, 0.0], vec![0.0, 0.0]], "e").is_err());
        assert!(VectorIndex::build(c.clone(), vec![vec![1.0, 0.0], vec![1.0]], "e").is_err());
        let dup = vec![chunk("a#0", "x"), chunk("a#0", "y")];
        assert!(VectorIndex::build(dup, vec![vec![1.0], vec![2.0]], "e").is_err());
    }

    #[test]
    fn retrieval_orders_by_score_then_chunk_id() {
        let chunks = vec![chunk("c", "3"), chunk("a", "1"), chunk("b", "2")];
        // "a" and "b" tie exactly; "c" is orthogonal to the query.
        let vectors = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 0.0]];
        let index = VectorIndex::build(chunks, vectors, "e").unwrap();
        let hits = index.retrieve_top_k(&[1.0, 0.0], 3).unwrap();
        let ids: Vec<&str> = hits.iter().map(|h| h.chunk.chunk_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
        assert_eq!(hits[0].rank, 1);
        assert_eq!(hits[2].rank, 3);
        assert!((hits[0].score - 1.0).abs() < 1e-12);
        assert!(hits[2].score.abs() < 1e-12);
    }

    #[test]
    fn retrieval_handles_small_and_empty_indexes() {
        let index = VectorIndex::build(vec![chunk("a", "1")], vec![vec![1.0, 1.0]], "e").unwrap();
        assert_eq!(index.retrieve_top_k(&[1.0, 0.0], 10).unwrap().len(), 1);
        let empty = VectorIndex::build(vec![], vec![], "e").unwrap();
        assert!(empty.retrieve_top_k(&[1.0, 0.0], 3).unwrap().is_empty());
    }

    #[test]
    fn retrieval_matches_brute_force() {
        let backend = MockEmbeddingBackend::new(16);
        let chunks: Vec<Chunk> = (0..40)
            .map(|i| chunk(&format!("d#{i:03}"), &format!("text number {i}")))
            .collect();
        let vectors: Vec<Vec<f64>> = chunks
            .iter()
            .map(|c| backend.vector_for(&c.text))
            .collect();
        let index = VectorIndex::build(chunks.clone(), vectors.clone(), "e").unwrap();
        let query = backend.vector_for("which text");
        let hits = index.retrieve_top_k(&query, 5).unwrap();

        let mut brute: Vec<(f64, String)> = chunks
            .iter()
            .zip(&vectors)
            .map(|(c, v)| (cosine_similarity(&query, v).unwrap(), c.chunk_id.clone()))
            .collect();
        brute.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        for (hit, (score, id)) in hits.iter().zip(&brute) {
            assert_eq!(&hit.chunk.chunk_id, id);
            assert!((hit.score - score).abs() < 1e-12);
        }
    }

    #[test]
    fn save_load_round_trips_bit_exactly() {
        let chunks = vec![chunk("a#0", "first"), chunk("b#0", "ünïcode 東京")];
        let vectors = vec![
            vec![1.0 / 3.0, -0.0, 1e-300],
            vec![f64::MIN_POSITIVE, 2.0_f64.sqrt(), -1e308],
        ];
        let index = VectorIndex::build(chunks, vectors, "text-embedding-3-large").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        index.save(&path).unwrap();
        let loaded = VectorIndex::load(&path).unwrap();
        assert_eq!(loaded.embedder_id(), "text-embedding-3-large");
        assert_eq!(loaded.len(), index.len());
        for (a, b) in index.entries().iter().zip(loaded.entries()) {
            assert_eq!(a.chunk, b.chunk);
            let bits_a: Vec<u64> = a.vector.iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.vector.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn load_rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not_an_index.bin");
        std::fs::write(&path, b"definitely not the right magic").unwrap();
        assert!(matches!(
            VectorIndex::load(&path),
            Err(IndexError::Format(_))
        ));
    }

    #[test]
    fn embedder_mismatch_is_detected() {
        let index = VectorIndex::build(vec![chunk("a", "1")], vec![vec![1.0]], "embed-a").unwrap();
        assert!(index.ensure_embedder("embed-a").is_ok());
        assert!(matches!(
            index.ensure_embedder("embed-b"),
            Err(IndexError::EmbedderMismatch { .. })
        ));
    }

    #[test]
    fn embed_texts_splits_batches_at_the_cap() {
        let backend = MockEmbeddingBackend::new(4);
        let texts: Vec<String> = (0..2500).map(|i| format!("t{i}")).collect();
        let out = embed_texts(&backend, &RetryPolicy::none(), &texts, 2048).unwrap();
        assert_eq!(out.len(), 2500);
        assert_eq!(backend.batch_sizes(), vec![2048, 452]);
    }

    #[test]
    fn hyde_substitutes_query_and_flags_empty_fallback() {
        let backend = Arc::new(
            MockChatBackend::new("gen")
                .reply_when("What is attention?", "A mechanism that weighs tokens."),
        );
        let gw = Gateway::builder()
            .bind(Role::Generator, Arc::clone(&backend) as _, "m")
            .build();
        let prompts = PromptSet::default();
        let out = hyde_transform("What is attention?", &gw, &prompts).unwrap();
        assert_eq!(out.text, "A mechanism that weighs tokens.");
        assert!(!out.fallback_used);
        let calls = backend.calls();
        assert!(calls[0].messages[0].content.contains("What is attention?"));
        assert!(!calls[0].messages[0].content.contains(QUERY_PLACEHOLDER));

        let empty_backend = Arc::new(MockChatBackend::new("gen").reply_any("   "));
        let gw2 = Gateway::builder()
            .bind(Role::Generator, empty_backend as _, "m")
            .build();
        let out2 = hyde_transform("same question", &gw2, &prompts).unwrap();
        assert_eq!(out2.text, "same question");
        assert!(out2.fallback_used);
    }
}
