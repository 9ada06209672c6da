//! Re-identification metrics: CMC Rank-K, mAP, mINP, and the top-1
//! similarity histogram.
//!
//! All per-query metrics are computed over the full gallery ranking with
//! 1-based ranks. Aggregates are unweighted means over queries.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::RankedList;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("relevant set is empty")]
    EmptyRelevant,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("queries without any relevant gallery item: {0:?}")]
    QueriesWithoutRelevant(Vec<usize>),
    #[error("query {query}: relevant gallery index {gallery_index} missing from ranking")]
    IncompleteRanking { query: usize, gallery_index: usize },
    #[error("{0} rankings but {1} judgment lists")]
    LengthMismatch(usize, usize),
    #[error("bin edges must be at least two strictly ascending values")]
    BadEdges,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rank1: f64,
    pub rank5: f64,
    pub rank10: f64,
    #[serde(rename = "mAP")]
    pub map: f64,
    #[serde(rename = "mINP")]
    pub minp: f64,
    pub num_queries: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Per-query values feeding [`EvalReport`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryMetrics {
    pub first_relevant_rank: usize,
    pub average_precision: f64,
    pub inverse_negative_penalty: f64,
}

/// 1-based ranks of the relevant items, ascending.
fn relevant_ranks(ranking: &RankedList, relevant: &[usize]) -> Result<Vec<usize>, MetricsError> {
    if relevant.is_empty() {
        return Err(MetricsError::EmptyRelevant);
    }
    let wanted: HashSet<usize> = relevant.iter().copied().collect();
    let ranks: Vec<usize> = ranking
        .entries
        .iter()
        .enumerate()
        .filter(|(_, (g, _))| wanted.contains(g))
        .map(|(p, _)| p + 1)
        .collect();
    if ranks.len() != wanted.len() {
        let found: HashSet<usize> = ranking.entries.iter().map(|e| e.0).collect();
        let missing = *wanted.iter().filter(|g| !found.contains(g)).min().expect("some relevant index is missing");
        return Err(MetricsError::IncompleteRanking { query: ranking.query_index, gallery_index: missing });
    }
    Ok(ranks)
}

pub fn cmc_at_k(ranking: &RankedList, relevant: &[usize], k: usize) -> Result<bool, MetricsError> {
    if relevant.is_empty() {
        return Err(MetricsError::EmptyRelevant);
    }
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    let wanted: HashSet<usize> = relevant.iter().copied().collect();
    Ok(ranking.entries.iter().take(k).any(|(g, _)| wanted.contains(g)))
}

pub fn average_precision(ranking: &RankedList, relevant: &[usize]) -> Result<f64, MetricsError> {
    let ranks = relevant_ranks(ranking, relevant)?;
    let sum: f64 = ranks.iter().enumerate().map(|(hit, &r)| (hit + 1) as f64 / r as f64).sum();
    Ok(sum / ranks.len() as f64)
}

/// |G| divided by the rank of the last relevant item.
pub fn inverse_negative_penalty(ranking: &RankedList, relevant: &[usize]) -> Result<f64, MetricsError> {
    let ranks = relevant_ranks(ranking, relevant)?;
    Ok(ranks.len() as f64 / *ranks.last().expect("non-empty") as f64)
}

pub fn query_metrics(ranking: &RankedList, relevant: &[usize]) -> Result<QueryMetrics, MetricsError> {
    let ranks = relevant_ranks(ranking, relevant)?;
    let ap = ranks.iter().enumerate().map(|(hit, &r)| (hit + 1) as f64 / r as f64).sum::<f64>() / ranks.len() as f64;
    Ok(QueryMetrics {
        first_relevant_rank: ranks[0],
        average_precision: ap,
        inverse_negative_penalty: ranks.len() as f64 / *ranks.last().expect("non-empty") as f64,
    })
}

fn check_inputs(rankings: &[RankedList], judgments: &[Vec<usize>]) -> Result<(), MetricsError> {
    if rankings.len() != judgments.len() {
        return Err(MetricsError::LengthMismatch(rankings.len(), judgments.len()));
    }
    let empty: Vec<usize> = rankings
        .iter()
        .zip(judgments)
        .filter(|(_, j)| j.is_empty())
        .map(|(r, _)| r.query_index)
        .collect();
    if empty.is_empty() {
        Ok(())
    } else {
        Err(MetricsError::QueriesWithoutRelevant(empty))
    }
}

/// Per-query metrics; `judgments[i]` is the relevant set of `rankings[i]`.
pub fn per_query(rankings: &[RankedList], judgments: &[Vec<usize>]) -> Result<Vec<QueryMetrics>, MetricsError> {
    check_inputs(rankings, judgments)?;
    rankings.iter().zip(judgments).map(|(r, j)| query_metrics(r, j)).collect()
}

pub fn evaluate(rankings: &[RankedList], judgments: &[Vec<usize>]) -> Result<EvalReport, MetricsError> {
    let per = per_query(rankings, judgments)?;
    let n = per.len();
    let mean = |f: &dyn Fn(&QueryMetrics) -> f64| {
        if n == 0 {
            0.0
        } else {
            per.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let hit = |k: usize| move |m: &QueryMetrics| if m.first_relevant_rank <= k { 1.0 } else { 0.0 };
    Ok(EvalReport {
        rank1: mean(&hit(1)),
        rank5: mean(&hit(5)),
        rank10: mean(&hit(10)),
        map: mean(&|m| m.average_precision),
        minp: mean(&|m| m.inverse_negative_penalty),
        num_queries: n,
    })
}

/// Top-1 similarities binned by whether the top-1 item was relevant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Top1Histogram {
    pub bin_edges: Vec<f64>,
    pub correct_counts: Vec<usize>,
    pub incorrect_counts: Vec<usize>,
    /// Mean top-1 score over correct queries (NaN when there are none).
    pub mean_correct: f64,
    pub mean_incorrect: f64,
}

impl Top1Histogram {
    pub fn num_queries(&self) -> usize {
        self.correct_counts.iter().sum::<usize>() + self.incorrect_counts.iter().sum::<usize>()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "bin_lo,bin_hi,correct,incorrect")?;
        for (i, w) in self.bin_edges.windows(2).enumerate() {
            writeln!(out, "{},{},{},{}", w[0], w[1], self.correct_counts[i], self.incorrect_counts[i])?;
        }
        Ok(())
    }
}

/// Evenly spaced edges from `lo` to `hi`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
}

/// Bins are half-open `[lo, hi)` except the last, which is closed. Scores
/// outside the edge span land in the boundary bins.
/// Median of the queries' top-1 similarities; the mean of the two middle
/// values for an even count. The usual way to pick the interaction
/// threshold for a new corpus.
pub fn median_top1_similarity(rankings: &[RankedList]) -> Option<f32> {
    let mut top: Vec<f32> = rankings.iter().filter_map(|r| r.top1().map(|(_, s)| s)).collect();
    if top.is_empty() {
        return None;
    }
    top.sort_by(f32::total_cmp);
    let mid = top.len() / 2;
    Some(if top.len() % 2 == 1 { top[mid] } else { ((f64::from(top[mid - 1]) + f64::from(top[mid])) / 2.0) as f32 })
}

pub fn top1_similarity_stats(rankings: &[RankedList], judgments: &[Vec<usize>], bin_edges: &[f64]) -> Result<Top1Histogram, MetricsError> {
    if bin_edges.len() < 2 || bin_edges.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
        return Err(MetricsError::BadEdges);
    }
    check_inputs(rankings, judgments)?;
    let bins = bin_edges.len() - 1;
    let mut correct_counts = vec![0; bins];
    let mut incorrect_counts = vec![0; bins];
    let (mut sum_c, mut n_c, mut sum_i, mut n_i) = (0.0, 0usize, 0.0, 0usize);
    for (r, rel) in rankings.iter().zip(judgments) {
        let Some((g, score)) = r.top1() else { continue };
        let s = f64::from(score);
        let bin = bin_edges[1..bins].partition_point(|&e| e <= s);
        if rel.contains(&g) {
            correct_counts[bin] += 1;
            sum_c += s;
            n_c += 1;
        } else {
            incorrect_counts[bin] += 1;
            sum_i += s;
            n_i += 1;
        }
    }
    Ok(Top1Histogram {
        bin_edges: bin_edges.to_vec(),
        correct_counts,
        incorrect_counts,
        mean_correct: sum_c / n_c as f64,
        mean_incorrect: sum_i / n_i as f64,
    })
}
