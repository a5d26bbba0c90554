//! Exact cosine top-k retrieval and weighted-vote identification.
//!
//! Rows are unit-norm, so cosine similarity is a plain dot product. Results
//! are ordered by similarity descending with ties broken by ascending row id,
//! which makes every query deterministic.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::store::{dot, EmbeddingRecord};

/// Rows whose norm differs from 1 by more than this are rejected.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum KnnError {
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("dimension mismatch: index has {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("gallery row {row} is not unit-norm (norm {norm})")]
    NotUnitNorm { row: usize, norm: f64 },
    #[error("gallery row {row} ({image_id}) has no identity label")]
    Unlabelled { row: usize, image_id: String },
    #[error("{rows} rows but {labels} labels")]
    LabelCountMismatch { rows: usize, labels: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub row: usize,
    pub similarity: f64,
    pub identity: Arc<str>,
}

/// Outcome of the weighted neighbourhood vote.
#[derive(Debug, Clone, PartialEq)]
pub struct Vote {
    pub identity: Arc<str>,
    /// Winning weight divided by the total weight; 0 when every neighbour
    /// had non-positive similarity.
    pub score: f64,
}

/// Immutable n×d gallery of unit-norm rows with one identity per row.
#[derive(Debug, Clone)]
pub struct GalleryIndex {
    dimension: usize,
    matrix: Vec<f32>,
    labels: Vec<Arc<str>>,
    image_ids: Vec<String>,
}

impl GalleryIndex {
    /// `rows` is row-major with `dimension` columns.
    pub fn new(
        dimension: usize,
        rows: Vec<f32>,
        labels: Vec<String>,
        image_ids: Vec<String>,
    ) -> Result<Self, KnnError> {
        if dimension == 0 || rows.is_empty() {
            return Err(KnnError::EmptyGallery);
        }
        if !rows.len().is_multiple_of(dimension) {
            return Err(KnnError::DimensionMismatch {
                expected: dimension,
                found: rows.len() % dimension,
            });
        }
        let n = rows.len() / dimension;
        if labels.len() != n || image_ids.len() != n {
            return Err(KnnError::LabelCountMismatch {
                rows: n,
                labels: labels.len().min(image_ids.len()),
            });
        }
        for (row, v) in rows.chunks_exact(dimension).enumerate() {
            let norm = dot(v, v).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(KnnError::NotUnitNorm { row, norm });
            }
        }
        // Intern labels so neighbours share one allocation per identity.
        let mut interned: HashMap<String, Arc<str>> = HashMap::new();
        let labels = labels
            .into_iter()
            .map(|l| {
                interned
                    .entry(l)
                    .or_insert_with_key(|k| Arc::from(k.as_str()))
                    .clone()
            })
            .collect();
        Ok(Self {
            dimension,
            matrix: rows,
            labels,
            image_ids,
        })
    }

    /// Builds a labelled gallery from normalized records.
    pub fn from_records<'a, I>(records: I) -> Result<Self, KnnError>
    where
        I: IntoIterator<Item = &'a EmbeddingRecord>,
    {
        let mut dimension = None;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut ids = Vec::new();
        for (row, rec) in records.into_iter().enumerate() {
            let d = *dimension.get_or_insert(rec.vector.len());
            if rec.vector.len() != d {
                return Err(KnnError::DimensionMismatch {
                    expected: d,
                    found: rec.vector.len(),
                });
            }
            let label = rec.identity.clone().ok_or_else(|| KnnError::Unlabelled {
                row,
                image_id: rec.image_id.clone(),
            })?;
            rows.extend_from_slice(&rec.vector);
            labels.push(label);
            ids.push(rec.image_id.clone());
        }
        Self::new(dimension.unwrap_or(0), rows, labels, ids)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.matrix[row * self.dimension..(row + 1) * self.dimension]
    }

    pub fn label(&self, row: usize) -> &Arc<str> {
        &self.labels[row]
    }

    pub fn image_id(&self, row: usize) -> &str {
        &self.image_ids[row]
    }

    /// The `min(k, n)` rows most similar to `query`, best first.
    pub fn search_topk(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>, KnnError> {
        if k == 0 {
            return Err(KnnError::ZeroK);
        }
        if query.len() != self.dimension {
            return Err(KnnError::DimensionMismatch {
                expected: self.dimension,
                found: query.len(),
            });
        }
        let k = k.min(self.len());
        // Max-heap whose top is the worst candidate kept so far.
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        for (row, v) in self.matrix.chunks_exact(self.dimension).enumerate() {
            let cand = Candidate {
                similarity: dot(v, query),
                row,
            };
            if heap.len() < k {
                heap.push(cand);
            } else if let Some(worst) = heap.peek() {
                if cand < *worst {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| Neighbor {
                row: c.row,
                similarity: c.similarity,
                identity: self.labels[c.row].clone(),
            })
            .collect())
    }

    /// Weighted k-NN vote over the top `k` neighbours of `query`.
    pub fn classify_weighted_vote(&self, query: &[f32], k: usize) -> Result<Vote, KnnError> {
        let neighbors = self.search_topk(query, k)?;
        Ok(vote(&neighbors))
    }
}

/// Ordering "better first": higher similarity, then lower row.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    similarity: f64,
    row: usize,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .similarity
            .total_cmp(&self.similarity)
            .then(self.row.cmp(&other.row))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

/// Vote weight of one neighbour: similarity clamped at zero.
#[inline]
pub fn vote_weight(similarity: f64) -> f64 {
    similarity.max(0.0)
}

/// Weighted vote over an already ranked neighbour list (best first).
///
/// Equal sums go to the label owning the single most similar neighbour,
/// then to the lexicographically smaller label.
///
/// # Panics
///
/// Panics if `neighbors` is empty.
pub fn vote(neighbors: &[Neighbor]) -> Vote {
    assert!(!neighbors.is_empty(), "vote over zero neighbours");
    struct Tally<'a> {
        label: &'a Arc<str>,
        sum: f64,
        best: f64,
    }
    let mut tallies: Vec<Tally> = Vec::new();
    let mut total = 0.0;
    for n in neighbors {
        let w = vote_weight(n.similarity);
        total += w;
        match tallies.iter_mut().find(|t| *t.label == n.identity) {
            Some(t) => {
                t.sum += w;
                t.best = t.best.max(n.similarity);
            }
            None => tallies.push(Tally {
                label: &n.identity,
                sum: w,
                best: n.similarity,
            }),
        }
    }
    let winner = tallies
        .iter()
        .max_by(|a, b| {
            a.sum
                .total_cmp(&b.sum)
                .then(a.best.total_cmp(&b.best))
                .then_with(|| b.label.cmp(a.label))
        })
        .expect("non-empty");
    Vote {
        identity: winner.label.clone(),
        score: if total > 0.0 { winner.sum / total } else { 0.0 },
    }
}
