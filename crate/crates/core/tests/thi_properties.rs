//! Properties of the interaction loop over random synthetic corpora.

mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use tirank::corpus::Dataset;
use tirank::metrics::median_top1_similarity;
use tirank::oracle::{LlmOracle, Oracle, ScriptedChat};
use tirank::retrieval::full_ranking;
use tirank::thi::{run_batch, AnchorPin, LocalizationMode, SessionStatus, ThiConfig};

fn config(ds: &Dataset, rounds: usize, lambda: f32) -> ThiConfig {
    let baseline = full_ranking(ds.queries(), ds.gallery()).unwrap();
    ThiConfig {
        rounds,
        fusion_weight: lambda,
        similarity_threshold: median_top1_similarity(&baseline).unwrap(),
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn untouched_queries_keep_baseline(seed: u64, p in 0.0f64..=1.0, lambda in 0.0f32..1.0, rounds in 1usize..6) {
        let ds = common::random_benchmark(&mut common::rng(seed));
        let oracle = common::simulated(&ds, p, 0.6, seed);
        let out = run_batch(&ds, &oracle, None, &config(&ds, rounds, lambda)).unwrap();
        for (t, r) in out.trace.iter().zip(&out.results) {
            if !t.refined {
                prop_assert_eq!(&r.fused_ranking, &out.baseline[t.query_index]);
            }
        }
    }

    #[test]
    fn call_accounting(seed: u64, p in 0.0f64..=1.0, rounds in 1usize..6) {
        let ds = common::random_benchmark(&mut common::rng(seed));
        let oracle = common::simulated(&ds, p, 0.6, seed);
        let out = run_batch(&ds, &oracle, None, &config(&ds, rounds, 0.8)).unwrap();
        let per_query: u64 = out.trace.iter().map(|t| u64::from(t.oracle_calls)).sum();
        prop_assert_eq!(per_query, out.total_oracle_calls);
        prop_assert_eq!(oracle.calls(), out.total_oracle_calls);
        for t in &out.trace {
            prop_assert!(t.rounds_executed >= 1 && t.rounds_executed <= rounds);
            prop_assert_eq!(t.verdicts.len(), t.rounds_executed);
            match t.status {
                SessionStatus::SkippedHighSimNo => prop_assert_eq!(t.rounds_executed, 1),
                SessionStatus::ExhaustedNoRefinement => {
                    prop_assert_eq!(t.rounds_executed, rounds.min(ds.gallery().rows()));
                    prop_assert!(t.verdicts.iter().all(|v| !v.is_yes()));
                }
                SessionStatus::Refined => prop_assert!(t.refined),
                SessionStatus::LowSimFirstYes => {
                    prop_assert_eq!(t.rounds_executed, 1);
                    prop_assert!(t.verdicts[0].is_yes());
                }
                other => prop_assert!(false, "unexpected status {:?}", other),
            }
        }
    }

    #[test]
    fn more_rounds_never_lose_refinements(seed: u64, p in 0.0f64..=1.0) {
        let ds = common::random_benchmark(&mut common::rng(seed));
        let mut previous: HashSet<usize> = HashSet::new();
        for rounds in 1..=6 {
            let oracle = common::simulated(&ds, p, 0.6, seed);
            let out = run_batch(&ds, &oracle, None, &config(&ds, rounds, 0.8)).unwrap();
            let refined: HashSet<usize> = out.trace.iter().filter(|t| t.refined).map(|t| t.query_index).collect();
            prop_assert!(previous.is_subset(&refined), "K={} lost {:?}", rounds, previous.difference(&refined));
            previous = refined;
        }
    }

    #[test]
    fn runs_are_reproducible(seed: u64, p in 0.0f64..=1.0) {
        let ds = common::random_benchmark(&mut common::rng(seed));
        let cfg = config(&ds, 4, 0.7);
        let a = run_batch(&ds, &common::simulated(&ds, p, 0.5, seed), None, &cfg).unwrap();
        let b = run_batch(&ds, &common::simulated(&ds, p, 0.5, seed), None, &cfg).unwrap();
        prop_assert_eq!(a.trace, b.trace);
        prop_assert_eq!(a.results, b.results);
    }
}

#[test]
fn unconditional_mode_localizes_every_candidate() {
    let ds = common::seed42();
    let oracle = common::simulated(&ds, 0.9, 0.6, 1);
    let cfg = ThiConfig { localization: LocalizationMode::Unconditional, ..config(&ds, 5, 0.8) };
    let out = run_batch(&ds, &oracle, None, &cfg).unwrap();
    assert!(out.trace.iter().all(|t| t.rounds_executed == 5));
    let gated = run_batch(&ds, &common::simulated(&ds, 0.9, 0.6, 1), None, &config(&ds, 5, 0.8)).unwrap();
    // same verdict stream, so the same refinements
    let refined = |o: &tirank::thi::BatchOutput| o.trace.iter().map(|t| (t.refined, t.anchor_gallery_index)).collect::<Vec<_>>();
    assert_eq!(refined(&out), refined(&gated));
    assert!(out.total_oracle_calls > gated.total_oracle_calls);
}

#[test]
fn top_candidate_pin_lifts_the_first_candidate() {
    let ds = common::seed42();
    let cfg = ThiConfig { anchor_pin: AnchorPin::TopCandidate, ..config(&ds, 5, 0.5) };
    let out = run_batch(&ds, &common::simulated(&ds, 1.0, 0.6, 42), None, &cfg).unwrap();
    for t in out.trace.iter().filter(|t| t.refined) {
        let top = out.baseline[t.query_index].entries[0].0;
        assert_eq!(out.results[t.query_index].fused_ranking.entries[0].0, top);
    }
}

#[test]
fn text_refinement_without_embedder_falls_back() {
    let ds = common::seed42();
    let baseline = full_ranking(ds.queries(), ds.gallery()).unwrap();
    // force query 0 into the high branch and answer Yes
    let xi = baseline[0].entries[0].1 - 0.01;
    let mut replies = vec!["Yes".to_string(), "1. male".into(), "a refined caption".into()];
    replies.extend(std::iter::repeat_n("No".to_string(), 5 * 200));
    let oracle = LlmOracle::new(ScriptedChat::new(replies));
    let cfg = ThiConfig { similarity_threshold: xi, ..Default::default() };
    let out = run_batch(&ds, &oracle, None, &cfg).unwrap();
    let t = &out.trace[0];
    assert_eq!(t.status, SessionStatus::Refined);
    assert!(!t.refined);
    assert_eq!(t.refined_text.as_deref(), Some("a refined caption"));
    assert!(t.error.as_deref().unwrap().contains("embedding"));
    assert_eq!(out.results[0].fused_ranking, out.baseline[0]);
}
