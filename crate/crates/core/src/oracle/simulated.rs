//! Ground-truth-aware oracle double.
//!
//! Localization answers the true identity match, flipped with probability
//! `1 - p`. Every verdict is a pure function of
//! `(seed, text_id, image_id, ordinal)`, so results do not depend on call
//! order or thread scheduling. Refinement interpolates the query embedding
//! toward the anchor image embedding instead of producing text.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BackendKind, LocAnswer, Oracle, OracleError, QuestionSet, RefinedQuery, Refinement, Verdict};
use crate::corpus::{normalize_in_place, EmbeddingMatrix, ImageRecord, TextRecord};
use crate::seeding::keyed_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedOracleConfig {
    /// Probability that a localization verdict is correct.
    pub localization_accuracy: f64,
    /// Interpolation weight toward the anchor embedding.
    pub refinement_strength: f64,
    pub seed: u64,
}

impl SimulatedOracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if !(0.0..=1.0).contains(&self.localization_accuracy) {
            return Err(OracleError::Template(format!(
                "localization accuracy {} outside [0, 1]",
                self.localization_accuracy
            )));
        }
        if !(0.0..=1.0).contains(&self.refinement_strength) {
            return Err(OracleError::Template(format!(
                "refinement strength {} outside [0, 1]",
                self.refinement_strength
            )));
        }
        Ok(())
    }
}

pub struct SimulatedOracle {
    config: SimulatedOracleConfig,
    text_embeddings: Arc<EmbeddingMatrix>,
    image_embeddings: Arc<EmbeddingMatrix>,
    calls: AtomicU64,
}

/// Stream key for one localization call.
fn call_key(seed: u64, text_id: &str, image_id: &str, ordinal: u32) -> u64 {
    keyed_seed(seed, &[text_id.as_bytes(), image_id.as_bytes(), &ordinal.to_le_bytes()])
}

impl SimulatedOracle {
    /// `text_embeddings` and `image_embeddings` are indexed by the records'
    /// `embedding_index`.
    pub fn new(
        config: SimulatedOracleConfig,
        text_embeddings: Arc<EmbeddingMatrix>,
        image_embeddings: Arc<EmbeddingMatrix>,
    ) -> Result<Self, OracleError> {
        config.validate()?;
        if text_embeddings.dim() != image_embeddings.dim() {
            return Err(OracleError::Embedding("text and image dimensions differ".into()));
        }
        Ok(Self { config, text_embeddings, image_embeddings, calls: AtomicU64::new(0) })
    }

    pub fn config(&self) -> &SimulatedOracleConfig {
        &self.config
    }

    fn unsupported(&self, operation: &'static str) -> OracleError {
        OracleError::Unsupported { backend: BackendKind::Simulated, operation }
    }

    /// `normalize((1 - beta) * query + beta * anchor)`.
    pub fn interpolate(&self, query: &[f32], anchor: &[f32]) -> Result<Vec<f32>, OracleError> {
        let beta = self.config.refinement_strength as f32;
        let mut v: Vec<f32> = query.iter().zip(anchor).map(|(&q, &a)| (1.0 - beta) * q + beta * a).collect();
        if !normalize_in_place(&mut v) {
            return Err(OracleError::Embedding("refined embedding has zero norm".into()));
        }
        Ok(v)
    }
}

impl Oracle for SimulatedOracle {
    fn kind(&self) -> BackendKind {
        BackendKind::Simulated
    }

    fn localize(&self, query: &TextRecord, image: &ImageRecord, ordinal: u32) -> Result<LocAnswer, OracleError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let truth = query.person_id == image.person_id;
        let mut rng = ChaCha8Rng::seed_from_u64(call_key(self.config.seed, &query.text_id, &image.image_id, ordinal));
        let correct = rng.random::<f64>() < self.config.localization_accuracy;
        let verdict = if truth == correct { Verdict::Yes } else { Verdict::No };
        let raw_reply = match verdict {
            Verdict::Yes => "Yes",
            Verdict::No => "No",
        };
        Ok(LocAnswer { verdict, raw_reply: raw_reply.into() })
    }

    fn vqa(&self, _questions: &QuestionSet, _image: &ImageRecord) -> Result<String, OracleError> {
        Err(self.unsupported("vqa"))
    }

    fn aggregate(&self, _answers: &str, _query: &TextRecord) -> Result<RefinedQuery, OracleError> {
        Err(self.unsupported("aggregate"))
    }

    fn refine_query(&self, query: &TextRecord, anchor: &ImageRecord) -> Result<RefinedQuery, OracleError> {
        let q = self.text_embeddings.row(query.embedding_index);
        let a = self.image_embeddings.row(anchor.embedding_index);
        Ok(RefinedQuery {
            refinement: Refinement::Embedding(self.interpolate(q, a)?),
            provenance: BackendKind::Simulated,
            oracle_calls: 0,
        })
    }

    fn decompose(&self, _text: &str) -> Result<Vec<String>, OracleError> {
        Err(self.unsupported("decompose"))
    }

    fn rewrite(&self, _sentence: &str, _m: usize) -> Result<Vec<String>, OracleError> {
        Err(self.unsupported("rewrite"))
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PersonId;
    use crate::retrieval::dot;

    fn oracle(p: f64, beta: f64) -> SimulatedOracle {
        let texts = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8]]).unwrap();
        let images = EmbeddingMatrix::from_rows(&[vec![0.0, 1.0], vec![0.6, 0.8]]).unwrap();
        let cfg = SimulatedOracleConfig { localization_accuracy: p, refinement_strength: beta, seed: 11 };
        SimulatedOracle::new(cfg, Arc::new(texts), Arc::new(images)).unwrap()
    }

    fn text(id: &str, person: u64, row: usize) -> TextRecord {
        TextRecord { text_id: id.into(), person_id: PersonId(person), raw_text: "x".into(), embedding_index: row, image_id: String::new() }
    }

    fn image(id: &str, person: u64, row: usize) -> ImageRecord {
        ImageRecord { image_id: id.into(), person_id: PersonId(person), source_path: String::new(), embedding_index: row }
    }

    #[test]
    fn perfect_oracle_answers_truth() {
        let o = oracle(1.0, 0.5);
        assert_eq!(o.localize(&text("t", 1, 0), &image("i", 1, 0), 0).unwrap().verdict, Verdict::Yes);
        assert_eq!(o.localize(&text("t", 1, 0), &image("j", 2, 0), 0).unwrap().verdict, Verdict::No);
        assert_eq!(o.calls(), 2);
    }

    #[test]
    fn always_wrong_oracle_flips() {
        let o = oracle(0.0, 0.5);
        assert_eq!(o.localize(&text("t", 1, 0), &image("i", 1, 0), 0).unwrap().verdict, Verdict::No);
        assert_eq!(o.localize(&text("t", 1, 0), &image("j", 2, 0), 0).unwrap().verdict, Verdict::Yes);
    }

    #[test]
    fn yes_rate_matches_accuracy() {
        let o = oracle(0.8, 0.5);
        let img = image("gallery", 3, 0);
        let yes = (0..10_000)
            .filter(|i| o.localize(&text(&format!("q{i}"), 3, 0), &img, 0).unwrap().verdict.is_yes())
            .count();
        let frac = yes as f64 / 10_000.0;
        assert!((frac - 0.8).abs() <= 0.01, "{frac}");
    }

    #[test]
    fn verdicts_are_pure() {
        let a = oracle(0.5, 0.5);
        let b = oracle(0.5, 0.5);
        let t = text("t", 1, 0);
        let forward: Vec<_> = (0..50).map(|k| a.localize(&t, &image(&format!("i{k}"), 1, 0), k).unwrap().verdict).collect();
        let backward: Vec<_> =
            (0..50).rev().map(|k| b.localize(&t, &image(&format!("i{k}"), 1, 0), k).unwrap().verdict).collect();
        assert_eq!(forward, backward.into_iter().rev().collect::<Vec<_>>());
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let q = text("t", 1, 0);
        let anchor = image("i", 1, 0);
        let r0 = oracle(1.0, 0.0).refine_query(&q, &anchor).unwrap();
        assert_eq!(r0.refinement, Refinement::Embedding(vec![1.0, 0.0]));
        let r1 = oracle(1.0, 1.0).refine_query(&q, &anchor).unwrap();
        assert_eq!(r1.refinement, Refinement::Embedding(vec![0.0, 1.0]));
        let Refinement::Embedding(mid) = oracle(1.0, 0.5).refine_query(&q, &anchor).unwrap().refinement else {
            panic!("expected embedding")
        };
        assert!((dot(&mid, &[0.0, 1.0]) - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert_eq!(r0.oracle_calls, 0);
    }

    #[test]
    fn text_operations_unsupported() {
        let o = oracle(1.0, 0.5);
        assert!(matches!(o.decompose("x"), Err(OracleError::Unsupported { .. })));
        assert!(matches!(o.vqa(&QuestionSet::default(), &image("i", 1, 0)), Err(OracleError::Unsupported { .. })));
    }

    #[test]
    fn config_ranges_enforced() {
        let cfg = SimulatedOracleConfig { localization_accuracy: 1.5, refinement_strength: 0.5, seed: 0 };
        assert!(cfg.validate().is_err());
        let cfg = SimulatedOracleConfig { localization_accuracy: 0.5, refinement_strength: -0.1, seed: 0 };
        assert!(cfg.validate().is_err());
    }
}
