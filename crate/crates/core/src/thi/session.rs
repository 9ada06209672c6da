//! One query's interaction session: the gated multi-round localization loop.

use serde::{Deserialize, Serialize};

use super::{LocalizationMode, ThiConfig};
use crate::corpus::{ImageRecord, TextRecord};
use crate::oracle::{Oracle, OracleError, RefinedQuery, Verdict};
use crate::retrieval::CandidateSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionStatus {
    /// Round 1 not yet answered.
    PendingRound1,
    /// Low top-1 similarity; scanning candidates for the first Yes.
    AwaitingLowSimAnchor,
    /// An anchor was located and the query refined.
    Refined,
    /// Low top-1 similarity and every candidate answered No.
    ExhaustedNoRefinement,
    /// High top-1 similarity and the top candidate answered No.
    SkippedHighSimNo,
    /// Low top-1 similarity but the top candidate answered Yes; neither
    /// branch can fire for such a query.
    LowSimFirstYes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySession {
    pub query_index: usize,
    pub candidate_set: CandidateSet,
    /// Rounds started so far (1-based once the first call is issued).
    pub round: usize,
    pub answers: Vec<Verdict>,
    pub status: SessionStatus,
}

impl QuerySession {
    pub fn new(query_index: usize, candidate_set: CandidateSet) -> Self {
        Self { query_index, candidate_set, round: 0, answers: Vec::new(), status: SessionStatus::PendingRound1 }
    }
}

/// The located anchor and the refinement produced from it.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorRefinement {
    /// 1-based round in which the anchor answered Yes.
    pub round: usize,
    pub anchor_gallery_index: usize,
    pub refined: RefinedQuery,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub session: QuerySession,
    pub refinement: Option<AnchorRefinement>,
    pub oracle_calls: u32,
    /// Set when an oracle error aborted the session.
    pub error: Option<OracleError>,
}

/// Whether round `k` (1-based) refines the query.
///
/// Round 1 refines when its verdict is Yes and the top-1 similarity exceeds
/// the threshold. A later round refines when every earlier verdict was No,
/// its own verdict is Yes, and the top-1 similarity is at most the threshold.
pub fn should_attempt_round(k: usize, top1_similarity: f32, threshold: f32, prior: &[Verdict], current: Verdict) -> bool {
    if !current.is_yes() {
        return false;
    }
    if k == 1 {
        top1_similarity > threshold
    } else {
        prior.iter().all(|v| !v.is_yes()) && top1_similarity <= threshold
    }
}

fn settle(status: &mut SessionStatus, high_similarity: bool, first: Verdict) {
    if *status == SessionStatus::Refined {
        return;
    }
    *status = match (high_similarity, first) {
        (true, _) => SessionStatus::SkippedHighSimNo,
        (false, Verdict::Yes) => SessionStatus::LowSimFirstYes,
        (false, Verdict::No) => SessionStatus::ExhaustedNoRefinement,
    };
}

/// Runs the localization loop over `candidates` and refines at most once.
///
/// Under [`LocalizationMode::Gated`] a high-similarity query costs exactly
/// one localization call and a low-similarity query stops at its first Yes.
/// An oracle error aborts the session, leaving the status at the stage where
/// it failed.
pub fn run_session(
    query: &TextRecord,
    query_index: usize,
    candidates: &CandidateSet,
    images: &[ImageRecord],
    oracle: &dyn Oracle,
    config: &ThiConfig,
) -> SessionOutcome {
    let mut session = QuerySession::new(query_index, candidates.clone());
    let mut outcome_calls = 0u32;
    let mut refinement = None;
    let Some(top1) = candidates.top1_similarity() else {
        session.status = SessionStatus::ExhaustedNoRefinement;
        return SessionOutcome { session, refinement, oracle_calls: 0, error: None };
    };
    let high = top1 > config.similarity_threshold;
    let rounds = config.rounds.min(candidates.candidates.len());
    let gated = config.localization == LocalizationMode::Gated;

    for k in 1..=rounds {
        session.round = k;
        let (gallery_index, _) = candidates.candidates[k - 1];
        outcome_calls += 1;
        let answer = match oracle.localize(query, &images[gallery_index], (k - 1) as u32) {
            Ok(a) => a,
            Err(e) => return SessionOutcome { session, refinement, oracle_calls: outcome_calls, error: Some(e) },
        };
        let fire = refinement.is_none()
            && should_attempt_round(k, top1, config.similarity_threshold, &session.answers, answer.verdict);
        session.answers.push(answer.verdict);
        if fire {
            match oracle.refine_query(query, &images[gallery_index]) {
                Ok(refined) => {
                    outcome_calls += refined.oracle_calls;
                    refinement = Some(AnchorRefinement { round: k, anchor_gallery_index: gallery_index, refined });
                    session.status = SessionStatus::Refined;
                }
                Err(e) => return SessionOutcome { session, refinement, oracle_calls: outcome_calls, error: Some(e) },
            }
        } else if k == 1 && !high {
            session.status = SessionStatus::AwaitingLowSimAnchor;
        }
        if gated && (session.status == SessionStatus::Refined || high || answer.verdict.is_yes()) {
            break;
        }
    }
    settle(&mut session.status, high, session.answers[0]);
    SessionOutcome { session, refinement, oracle_calls: outcome_calls, error: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Verdict::{No, Yes};

    #[test]
    fn first_round_high_similarity_yes() {
        assert!(should_attempt_round(1, 0.65, 0.6, &[], Yes));
    }

    #[test]
    fn first_round_high_similarity_no_never_refines() {
        assert!(!should_attempt_round(1, 0.65, 0.6, &[], No));
        // the later branch needs top-1 similarity at or below the threshold
        for k in 2..=5 {
            let prior = vec![No; k - 1];
            assert!(!should_attempt_round(k, 0.65, 0.6, &prior, Yes));
        }
    }

    #[test]
    fn third_round_after_two_noes() {
        assert!(should_attempt_round(3, 0.4, 0.6, &[No, No], Yes));
        assert!(!should_attempt_round(3, 0.4, 0.6, &[No, Yes], Yes));
        assert!(!should_attempt_round(3, 0.4, 0.6, &[No, No], No));
    }

    #[test]
    fn low_similarity_first_round_yes_does_not_refine() {
        assert!(!should_attempt_round(1, 0.4, 0.6, &[], Yes));
        assert!(!should_attempt_round(2, 0.4, 0.6, &[Yes], Yes));
    }

    #[test]
    fn threshold_boundary_is_low_branch() {
        assert!(!should_attempt_round(1, 0.6, 0.6, &[], Yes));
        assert!(should_attempt_round(2, 0.6, 0.6, &[No], Yes));
    }
}
