//! Test-time interaction: per-query sessions with the oracle and fusion
//! re-ranking of the refined query's similarities.

mod batch;
mod config;
mod session;

use thiserror::Error;

pub use batch::{run_batch, write_trace_jsonl, BatchOutput, ReRankedResult, TraceEntry};
pub use config::{AnchorPin, LocalizationMode, ThiConfig};
pub use session::{run_session, should_attempt_round, AnchorRefinement, QuerySession, SessionOutcome, SessionStatus};

use crate::metrics::MetricsError;
use crate::retrieval::RetrievalError;

#[derive(Debug, Error)]
pub enum ThiError {
    #[error("invalid interaction config: {0}")]
    Config(String),
    #[error("score vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("anchor {anchor} outside gallery of {len}")]
    AnchorOutOfRange { anchor: usize, len: usize },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Fused re-ranking scores `λ·S[v] + (1 − λ)·S̄[v]`, where `S̄` is 1 at the
/// anchor and the refined similarity elsewhere. Refined similarities are
/// clamped to `[-1, 1]` so rounding can never lift another item above the
/// pinned anchor.
pub fn fuse(baseline: &[f32], refined: &[f32], anchor: usize, lambda: f32) -> Result<Vec<f32>, ThiError> {
    if baseline.len() != refined.len() {
        return Err(ThiError::LengthMismatch(baseline.len(), refined.len()));
    }
    if anchor >= baseline.len() {
        return Err(ThiError::AnchorOutOfRange { anchor, len: baseline.len() });
    }
    let rest = 1.0 - lambda;
    if rest == 0.0 {
        // keeps signed zeros bit-identical
        return Ok(baseline.to_vec());
    }
    Ok(baseline
        .iter()
        .zip(refined)
        .enumerate()
        .map(|(v, (&s, &r))| {
            let aux = if v == anchor { 1.0 } else { r.clamp(-1.0, 1.0) };
            lambda * s + rest * aux
        })
        .collect())
}
