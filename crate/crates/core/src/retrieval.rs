//! Exact cosine similarity, full rankings and Top-K candidate sets.
//!
//! Rows are unit-norm after ingestion, so cosine similarity is a dot
//! product. Scores stay `f32`; ordering is by descending score with ties
//! broken by ascending gallery index.

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EmbeddingMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("dimension mismatch: query has {query}, gallery has {gallery}")]
    DimensionMismatch { query: usize, gallery: usize },
    #[error("K must be at least 1")]
    ZeroK,
    #[error("query index {index} out of range ({rows} queries)")]
    QueryOutOfRange { index: usize, rows: usize },
}

/// Similarity-ordered gallery entries for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_index: usize,
    #[serde(rename = "ranking")]
    pub entries: Vec<(usize, f32)>,
}

impl RankedList {
    /// Ranks a dense score vector (one score per gallery index).
    pub fn from_scores(query_index: usize, scores: &[f32]) -> Self {
        let mut entries: Vec<(usize, f32)> = scores.iter().copied().enumerate().collect();
        entries.sort_unstable_by(rank_order);
        Self { query_index, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn top1(&self) -> Option<(usize, f32)> {
        self.entries.first().copied()
    }

    /// 1-based rank of `gallery_index`, if present.
    pub fn rank_of(&self, gallery_index: usize) -> Option<usize> {
        self.entries.iter().position(|&(g, _)| g == gallery_index).map(|p| p + 1)
    }

    pub fn truncated(&self, k: usize) -> Self {
        Self { query_index: self.query_index, entries: self.entries[..k.min(self.entries.len())].to_vec() }
    }
}

/// The first K entries of a query's ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub query_index: usize,
    pub candidates: Vec<(usize, f32)>,
}

impl CandidateSet {
    pub fn top1_similarity(&self) -> Option<f32> {
        self.candidates.first().map(|&(_, s)| s)
    }
}

/// Total order used by every ranking in the crate.
pub fn rank_order(a: &(usize, f32), b: &(usize, f32)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn similarity(query_row: &[f32], gallery: &EmbeddingMatrix) -> Result<Vec<f32>, RetrievalError> {
    if query_row.len() != gallery.dim() {
        return Err(RetrievalError::DimensionMismatch { query: query_row.len(), gallery: gallery.dim() });
    }
    Ok(gallery.iter_rows().map(|row| dot(query_row, row)).collect())
}

/// Top-K selection over a dense score vector. K larger than the gallery is
/// clamped.
pub fn top_k_from_scores(query_index: usize, scores: &[f32], k: usize) -> Result<CandidateSet, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    let mut entries: Vec<(usize, f32)> = scores.iter().copied().enumerate().collect();
    let k = k.min(entries.len());
    if k < entries.len() {
        entries.select_nth_unstable_by(k, rank_order);
        entries.truncate(k);
    }
    entries.sort_unstable_by(rank_order);
    Ok(CandidateSet { query_index, candidates: entries })
}

/// Top-K gallery items for row `query_index` of `queries`.
pub fn top_k(queries: &EmbeddingMatrix, gallery: &EmbeddingMatrix, query_index: usize, k: usize) -> Result<CandidateSet, RetrievalError> {
    if query_index >= queries.rows() {
        return Err(RetrievalError::QueryOutOfRange { index: query_index, rows: queries.rows() });
    }
    let scores = similarity(queries.row(query_index), gallery)?;
    top_k_from_scores(query_index, &scores, k)
}

/// Dense score vectors, one per query row.
pub fn score_matrix(queries: &EmbeddingMatrix, gallery: &EmbeddingMatrix) -> Result<Vec<Vec<f32>>, RetrievalError> {
    if queries.dim() != gallery.dim() {
        return Err(RetrievalError::DimensionMismatch { query: queries.dim(), gallery: gallery.dim() });
    }
    Ok((0..queries.rows())
        .into_par_iter()
        .map(|q| gallery.iter_rows().map(|row| dot(queries.row(q), row)).collect())
        .collect())
}

pub fn full_ranking(queries: &EmbeddingMatrix, gallery: &EmbeddingMatrix) -> Result<Vec<RankedList>, RetrievalError> {
    let scores = score_matrix(queries, gallery)?;
    Ok(scores.par_iter().enumerate().map(|(q, s)| RankedList::from_scores(q, s)).collect())
}

/// Writes one JSON object per ranking, optionally truncated to `top` entries.
pub fn write_rankings_jsonl<W: Write>(mut out: W, rankings: &[RankedList], top: Option<usize>) -> std::io::Result<()> {
    for r in rankings {
        let line = match top {
            Some(k) => serde_json::to_string(&r.truncated(k)),
            None => serde_json::to_string(r),
        }
        .map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_rankings_jsonl<R: BufRead>(input: R) -> std::io::Result<Vec<RankedList>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: RankedList = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1))
        })?;
        out.push(r);
    }
    Ok(out)
}
