//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tirank::corpus::{
    generate_synthetic_benchmark, AnnotationEntry, Corpus, Dataset, EmbeddingMatrix, SyntheticBenchConfig,
};
use tirank::oracle::{SimulatedOracle, SimulatedOracleConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The seed-42 benchmark: 200 identities, 2 images and 1 caption each,
/// dimension 64, noise 0.6.
pub fn seed42() -> Dataset {
    generate_synthetic_benchmark(&SyntheticBenchConfig::default()).unwrap()
}

/// A small synthetic benchmark with randomly drawn shape and noise.
pub fn random_benchmark(rng: &mut ChaCha8Rng) -> Dataset {
    let cfg = SyntheticBenchConfig {
        num_identities: rng.random_range(3..30),
        images_per_identity: rng.random_range(1..4),
        texts_per_identity: rng.random_range(1..3),
        dim: rng.random_range(2..24),
        noise_sigma: rng.random_range(0.05..1.2),
        seed: rng.random(),
    };
    generate_synthetic_benchmark(&cfg).unwrap()
}

pub fn simulated(ds: &Dataset, accuracy: f64, strength: f64, seed: u64) -> SimulatedOracle {
    SimulatedOracle::new(
        SimulatedOracleConfig { localization_accuracy: accuracy, refinement_strength: strength, seed },
        Arc::new(ds.text_embeddings().clone()),
        Arc::new(ds.image_embeddings().clone()),
    )
    .unwrap()
}

fn random_string(rng: &mut ChaCha8Rng) -> String {
    const PIECES: &[&str] = &["a", "man", " ", "wears", "\"quoted\"", "\\", "é", "穿", "\n", "\t", "🙂", "coat,", "."];
    (0..rng.random_range(0..12)).map(|_| PIECES[rng.random_range(0..PIECES.len())]).collect()
}

/// A random annotated corpus with unusual strings, uncaptioned images and
/// non-unit embeddings, plus its two embedding matrices.
pub fn random_annotated(rng: &mut ChaCha8Rng) -> (Corpus, EmbeddingMatrix, EmbeddingMatrix) {
    let images = rng.random_range(1..25);
    let dim = rng.random_range(1..17);
    let mut entries = Vec::new();
    let mut text_rows = 0;
    for i in 0..images {
        let captions: Vec<String> = (0..rng.random_range(0..4)).map(|_| format!("c{}", random_string(rng))).collect();
        let n = captions.len();
        entries.push(AnnotationEntry {
            image_id: format!("img-{i}-{}", random_string(rng).replace(['#', '~'], "")),
            person_id: rng.random_range(0..8),
            file_path: format!("dir/{}.jpg", random_string(rng)),
            captions,
            image_embedding_index: i,
            caption_embedding_indices: (text_rows..text_rows + n).collect(),
        });
        text_rows += n;
    }
    let mut matrix = |rows: usize| {
        let data: Vec<f32> = (0..rows * dim)
            .map(|k| {
                // keep every row away from zero
                let v: f32 = rng.random_range(-3.0..3.0);
                if k % dim == 0 { v.abs() + 0.5 } else { v }
            })
            .collect();
        EmbeddingMatrix::from_raw(rows, dim, data).unwrap()
    };
    let image_matrix = matrix(images);
    let text_matrix = matrix(text_rows.max(1));
    (Corpus::from_entries(entries).unwrap(), image_matrix, text_matrix)
}
