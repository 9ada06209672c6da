use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use super::{fuse, run_session, AnchorPin, SessionOutcome, SessionStatus, ThiConfig, ThiError};
use crate::corpus::Dataset;
use crate::metrics::{evaluate, EvalReport, MetricsError};
use crate::oracle::{BackendKind, Oracle, OracleError, QueryEmbedder, Refinement, Verdict};
use crate::retrieval::{score_matrix, similarity, CandidateSet, RankedList};

/// Audit record of one query's session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub query_index: usize,
    pub text_id: String,
    pub status: SessionStatus,
    pub rounds_executed: usize,
    pub verdicts: Vec<Verdict>,
    /// Whether fused scores replaced the baseline for this query.
    pub refined: bool,
    pub anchor_round: Option<usize>,
    pub anchor_gallery_index: Option<usize>,
    /// Whether the anchor shows the query's person.
    pub anchor_correct: Option<bool>,
    pub refinement_provenance: Option<BackendKind>,
    pub refined_text: Option<String>,
    pub oracle_calls: u32,
    /// 1-based rank of the best-ranked relevant image before re-ranking.
    pub gt_rank_baseline: Option<usize>,
    pub gt_rank_fused: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReRankedResult {
    pub query_index: usize,
    pub fused_scores: Vec<f32>,
    pub fused_ranking: RankedList,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub baseline: Vec<RankedList>,
    pub results: Vec<ReRankedResult>,
    pub trace: Vec<TraceEntry>,
    pub before: EvalReport,
    pub after: EvalReport,
    /// Sum of the per-session call counts.
    pub total_oracle_calls: u64,
    pub refined_queries: usize,
    pub failed_queries: usize,
}

impl BatchOutput {
    pub fn fused_rankings(&self) -> Vec<RankedList> {
        self.results.iter().map(|r| r.fused_ranking.clone()).collect()
    }
}

struct QueryRun<'a> {
    dataset: &'a Dataset,
    judgments: &'a [Vec<usize>],
    oracle: &'a dyn Oracle,
    embedder: Option<&'a dyn QueryEmbedder>,
    config: &'a ThiConfig,
    calls: &'a AtomicU64,
}

fn best_rank(ranking: &RankedList, relevant: &[usize]) -> Option<usize> {
    ranking.entries.iter().position(|(g, _)| relevant.contains(g)).map(|p| p + 1)
}

impl QueryRun<'_> {
    fn refined_embedding(&self, q: usize, refinement: &Refinement) -> Result<Vec<f32>, OracleError> {
        match refinement {
            Refinement::Embedding(v) => Ok(v.clone()),
            Refinement::Text(text) => {
                let embedder = self.embedder.ok_or_else(|| {
                    OracleError::Embedding("text refinement needs an embedding service or refined-embedding file".into())
                })?;
                embedder.embed(&self.dataset.corpus().texts()[q], text)
            }
        }
    }

    fn run(&self, q: usize, scores: &[f32], baseline: &RankedList) -> Result<(ReRankedResult, TraceEntry), ThiError> {
        let corpus = self.dataset.corpus();
        let query = &corpus.texts()[q];
        let candidates = CandidateSet {
            query_index: q,
            candidates: baseline.entries[..self.config.candidate_size().min(baseline.len())].to_vec(),
        };
        let SessionOutcome { session, refinement, oracle_calls, error } =
            run_session(query, q, &candidates, corpus.images(), self.oracle, self.config);
        self.calls.fetch_add(u64::from(oracle_calls), Ordering::Relaxed);

        let mut error = error.map(|e| e.to_string());
        let mut fused = None;
        if let Some(r) = &refinement {
            match self.refined_embedding(q, &r.refined.refinement) {
                Ok(emb) => {
                    let refined_scores = similarity(&emb, self.dataset.gallery())?;
                    let anchor = match self.config.anchor_pin {
                        AnchorPin::Located => r.anchor_gallery_index,
                        AnchorPin::TopCandidate => candidates.candidates[0].0,
                    };
                    fused = Some(fuse(scores, &refined_scores, anchor, self.config.fusion_weight)?);
                }
                Err(e) => error = Some(e.to_string()),
            }
        }
        let refined = fused.is_some();
        let (fused_scores, fused_ranking) = match fused {
            Some(f) => {
                let ranking = RankedList::from_scores(q, &f);
                (f, ranking)
            }
            None => (scores.to_vec(), baseline.clone()),
        };
        let relevant = &self.judgments[q];
        let trace = TraceEntry {
            query_index: q,
            text_id: query.text_id.clone(),
            status: session.status,
            rounds_executed: session.round,
            verdicts: session.answers,
            refined,
            anchor_round: refinement.as_ref().map(|r| r.round),
            anchor_gallery_index: refinement.as_ref().map(|r| r.anchor_gallery_index),
            anchor_correct: refinement
                .as_ref()
                .map(|r| corpus.images()[r.anchor_gallery_index].person_id == query.person_id),
            refinement_provenance: refinement.as_ref().map(|r| r.refined.provenance),
            refined_text: refinement.as_ref().and_then(|r| r.refined.text().map(str::to_string)),
            oracle_calls,
            gt_rank_baseline: best_rank(baseline, relevant),
            gt_rank_fused: best_rank(&fused_ranking, relevant),
            error,
        };
        Ok((ReRankedResult { query_index: q, fused_scores, fused_ranking }, trace))
    }
}

/// Runs a session for every query, fuses refined scores and evaluates the
/// baseline and re-ranked rankings.
///
/// Sessions run on a pool of `max_inflight` threads unless the oracle is
/// single-consumer, in which case they run in query order. Output is
/// ordered by query index either way, so it does not depend on scheduling.
/// Oracle failures degrade the affected query to its baseline ranking.
pub fn run_batch(
    dataset: &Dataset,
    oracle: &dyn Oracle,
    embedder: Option<&dyn QueryEmbedder>,
    config: &ThiConfig,
) -> Result<BatchOutput, ThiError> {
    config.validate()?;
    let judgments = dataset.judgments();
    let orphans: Vec<usize> = judgments.iter().enumerate().filter(|(_, j)| j.is_empty()).map(|(q, _)| q).collect();
    if !orphans.is_empty() {
        return Err(MetricsError::QueriesWithoutRelevant(orphans).into());
    }
    let scores = score_matrix(dataset.queries(), dataset.gallery())?;
    let baseline: Vec<RankedList> = scores.par_iter().enumerate().map(|(q, s)| RankedList::from_scores(q, s)).collect();

    let calls = AtomicU64::new(0);
    let run = QueryRun { dataset, judgments: &judgments, oracle, embedder, config, calls: &calls };
    let per_query = |q: usize| run.run(q, &scores[q], &baseline[q]);
    let outputs: Vec<(ReRankedResult, TraceEntry)> = if oracle.is_concurrent() {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.max_inflight)
            .build()
            .map_err(|e| ThiError::ThreadPool(e.to_string()))?;
        pool.install(|| (0..scores.len()).into_par_iter().map(per_query).collect::<Result<_, _>>())?
    } else {
        (0..scores.len()).map(per_query).collect::<Result<_, _>>()?
    };
    let (results, trace): (Vec<_>, Vec<_>) = outputs.into_iter().unzip();

    let fused: Vec<RankedList> = results.iter().map(|r: &ReRankedResult| r.fused_ranking.clone()).collect();
    let before = evaluate(&baseline, &judgments)?;
    let after = evaluate(&fused, &judgments)?;
    let refined_queries = trace.iter().filter(|t: &&TraceEntry| t.refined).count();
    let failed_queries = trace.iter().filter(|t| t.error.is_some()).count();
    Ok(BatchOutput {
        baseline,
        results,
        trace,
        before,
        after,
        total_oracle_calls: calls.into_inner(),
        refined_queries,
        failed_queries,
    })
}

pub fn write_trace_jsonl<W: Write>(mut out: W, trace: &[TraceEntry]) -> std::io::Result<()> {
    for t in trace {
        let line = serde_json::to_string(t).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}
