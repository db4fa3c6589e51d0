//! Exact cosine index over fragment embeddings and greedy MMR selection.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::parallel::Execution;
use crate::providers::EmbeddingVector;

pub const INDEX_FORMAT: &str = "lexguide-index/1";

/// Defaults: diversity weight, topic-building pool and answer pool.
pub const DEFAULT_LAMBDA: f64 = 0.6;
pub const DEFAULT_K_TOPIC: usize = 500;
pub const DEFAULT_K_ANSWER: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("duplicate fragment id {0}")]
    DuplicateFragmentId(String),
    #[error("{0} fragments but {1} vectors")]
    LengthMismatch(usize, usize),
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("malformed index file at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine of the angle between two equal-length, nonzero vectors.
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if u.dim() != v.dim() {
        return Err(RetrievalError::DimensionMismatch {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok(cosine_with_norms(u.values(), nu, v.values(), nv))
}

/// Cosine with precomputed norms; zero-norm inputs score 0.
pub(crate) fn cosine_with_norms(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Cosine of equal-length slices; zero vectors score 0.
pub fn cosine_or_zero(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    cosine_with_norms(a.values(), a.norm(), b.values(), b.norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub fragment_id: String,
    pub vector: EmbeddingVector,
}

/// Immutable, exhaustively scanned vector index.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    entries: Vec<IndexEntry>,
    norms: Vec<f64>,
    positions: HashMap<String, usize>,
    dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFragment {
    pub fragment_id: String,
    pub score: f64,
    pub rank: usize,
}

impl VectorIndex {
    /// Build from aligned ids and vectors.
    pub fn build(ids: Vec<String>, vectors: Vec<EmbeddingVector>) -> Result<Self, RetrievalError> {
        if ids.len() != vectors.len() {
            return Err(RetrievalError::LengthMismatch(ids.len(), vectors.len()));
        }
        let dim = vectors.first().map_or(0, EmbeddingVector::dim);
        let mut positions = HashMap::with_capacity(ids.len());
        let mut entries = Vec::with_capacity(ids.len());
        for (i, (fragment_id, vector)) in ids.into_iter().zip(vectors).enumerate() {
            if vector.dim() != dim {
                return Err(RetrievalError::DimensionMismatch {
                    expected: dim,
                    got: vector.dim(),
                });
            }
            if positions.insert(fragment_id.clone(), i).is_some() {
                return Err(RetrievalError::DuplicateFragmentId(fragment_id));
            }
            entries.push(IndexEntry { fragment_id, vector });
        }
        let norms = entries.iter().map(|e| e.vector.norm()).collect();
        Ok(Self {
            entries,
            norms,
            positions,
            dim,
        })
    }

    pub fn from_fragments(
        fragments: &[crate::corpus::Fragment],
        vectors: Vec<EmbeddingVector>,
    ) -> Result<Self, RetrievalError> {
        Self::build(fragments.iter().map(|f| f.id.clone()).collect(), vectors)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn vector(&self, fragment_id: &str) -> Option<&EmbeddingVector> {
        self.positions.get(fragment_id).map(|&i| &self.entries[i].vector)
    }

    pub fn contains(&self, fragment_id: &str) -> bool {
        self.positions.contains_key(fragment_id)
    }

    fn check_query(&self, query: &EmbeddingVector) -> Result<(), RetrievalError> {
        if !self.is_empty() && query.dim() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        Ok(())
    }

    /// Cosine similarity of `query` to every entry, in index order.
    pub fn similarities(&self, query: &EmbeddingVector, exec: Execution) -> Result<Vec<f64>, RetrievalError> {
        self.check_query(query)?;
        let qn = query.norm();
        Ok(exec.map_range(self.len(), |i| {
            cosine_with_norms(query.values(), qn, self.entries[i].vector.values(), self.norms[i])
        }))
    }

    fn pair_similarity(&self, i: usize, j: usize) -> f64 {
        cosine_with_norms(
            self.entries[i].vector.values(),
            self.norms[i],
            self.entries[j].vector.values(),
            self.norms[j],
        )
    }

    fn id_order(&self, a: usize, b: usize) -> std::cmp::Ordering {
        self.entries[a].fragment_id.cmp(&self.entries[b].fragment_id)
    }

    /// Plain top-k by cosine similarity; ties by smaller fragment id.
    pub fn top_k(&self, query: &EmbeddingVector, k: usize, exec: Execution) -> Result<Vec<ScoredFragment>, RetrievalError> {
        let sims = self.similarities(query, exec)?;
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then_with(|| self.id_order(a, b)));
        Ok(order
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(rank, i)| ScoredFragment {
                fragment_id: self.entries[i].fragment_id.clone(),
                score: sims[i],
                rank,
            })
            .collect())
    }

    /// Greedy maximal marginal relevance.
    ///
    /// The first pick maximizes similarity to the query; each later pick
    /// maximizes `λ·sim(d, q) − (1 − λ)·max_{s ∈ selected} sim(d, s)`. Ties go
    /// to the lexicographically smaller fragment id. The reported score is
    /// the value that won the pick.
    pub fn mmr_retrieve(
        &self,
        query: &EmbeddingVector,
        k: usize,
        lambda: f64,
        exec: Execution,
    ) -> Result<Vec<ScoredFragment>, RetrievalError> {
        let n = self.len();
        if n == 0 || k == 0 {
            return Ok(Vec::new());
        }
        let query_sims = self.similarities(query, exec)?;
        let take = k.min(n);
        let mut selected = vec![false; n];
        // max similarity to anything selected so far
        let mut redundancy = vec![f64::NEG_INFINITY; n];
        let mut out = Vec::with_capacity(take);

        for rank in 0..take {
            let first = rank == 0;
            let score = |i: usize| -> Option<f64> {
                if selected[i] {
                    None
                } else if first {
                    Some(query_sims[i])
                } else {
                    Some(lambda * query_sims[i] - (1.0 - lambda) * redundancy[i])
                }
            };
            let pick = exec
                .argmax_by(n, score, |a, b| self.id_order(a, b))
                .expect("unselected candidates remain");
            let won = score(pick).unwrap();
            selected[pick] = true;
            out.push(ScoredFragment {
                fragment_id: self.entries[pick].fragment_id.clone(),
                score: won,
                rank,
            });
            if rank + 1 < take {
                exec.for_each_mut(&mut redundancy, |i, r| {
                    let s = self.pair_similarity(i, pick);
                    if s > *r {
                        *r = s;
                    }
                });
            }
        }
        Ok(out)
    }

    /// JSONL snapshot: a header line then one entry per line.
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let io = |e| RetrievalError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
        let header = serde_json::json!({"format": INDEX_FORMAT, "dim": self.dim, "count": self.len()});
        writeln!(w, "{header}").map_err(io)?;
        for e in &self.entries {
            writeln!(w, "{}", serde_json::to_string(e).expect("entry serializes")).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let io = |e| RetrievalError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let reader = BufReader::new(fs::File::open(path).map_err(io)?);
        let mut lines = reader.lines().enumerate();
        let header: serde_json::Value = match lines.next() {
            Some((_, line)) => serde_json::from_str(&line.map_err(io)?).map_err(|e| RetrievalError::Malformed {
                line: 1,
                message: e.to_string(),
            })?,
            None => {
                return Err(RetrievalError::Malformed {
                    line: 1,
                    message: "missing header".into(),
                })
            }
        };
        if header.get("format").and_then(|v| v.as_str()) != Some(INDEX_FORMAT) {
            return Err(RetrievalError::Malformed {
                line: 1,
                message: format!("expected format {INDEX_FORMAT}"),
            });
        }
        let dim = header.get("dim").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
        let (mut ids, mut vectors) = (Vec::new(), Vec::new());
        for (i, line) in lines {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let e: IndexEntry = serde_json::from_str(&line).map_err(|e| RetrievalError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            if e.vector.dim() != dim {
                return Err(RetrievalError::DimensionMismatch {
                    expected: dim,
                    got: e.vector.dim(),
                });
            }
            ids.push(e.fragment_id);
            vectors.push(e.vector);
        }
        Self::build(ids, vectors)
    }
}
