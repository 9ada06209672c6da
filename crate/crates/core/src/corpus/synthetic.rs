//! Identity-cluster benchmark: one random unit center per person, every image
//! and text embedding a noisy copy of its person's center.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{AnnotationEntry, Corpus, CorpusError, Dataset, EmbeddingMatrix, SyntheticBenchConfig};

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, sigma: f64) -> Vec<f64> {
    (0..dim).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(v: &[f64]) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / norm) as f32).collect()
}

fn noisy_copy(rng: &mut ChaCha8Rng, center: &[f32], sigma: f64) -> Vec<f32> {
    let noise = gaussian_vec(rng, center.len(), sigma);
    center.iter().zip(noise).map(|(&c, n)| (f64::from(c) + n) as f32).collect()
}

pub fn generate_synthetic_benchmark(cfg: &SyntheticBenchConfig) -> Result<Dataset, CorpusError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centers: Vec<Vec<f32>> = (0..cfg.num_identities)
        .map(|_| loop {
            let v = gaussian_vec(&mut rng, cfg.dim, 1.0);
            if v.iter().any(|&x| x != 0.0) {
                break unit(&v);
            }
        })
        .collect();

    let mut entries = Vec::with_capacity(cfg.num_identities * cfg.images_per_identity);
    let mut image_rows = Vec::new();
    let mut text_rows = Vec::new();
    for (pid, center) in centers.iter().enumerate() {
        let first_entry = entries.len();
        for j in 0..cfg.images_per_identity {
            image_rows.push(noisy_copy(&mut rng, center, cfg.noise_sigma));
            entries.push(AnnotationEntry {
                image_id: format!("p{pid:05}_img{j}"),
                person_id: pid as u64,
                file_path: format!("synthetic/p{pid:05}/img{j}.jpg"),
                captions: Vec::new(),
                image_embedding_index: image_rows.len() - 1,
                caption_embedding_indices: Vec::new(),
            });
        }
        for t in 0..cfg.texts_per_identity {
            text_rows.push(noisy_copy(&mut rng, center, cfg.noise_sigma));
            let entry: &mut AnnotationEntry = &mut entries[first_entry + t % cfg.images_per_identity];
            entry.captions.push(format!("synthetic description {t} of person {pid}."));
            entry.caption_embedding_indices.push(text_rows.len() - 1);
        }
    }

    let corpus = Corpus::from_entries(entries)?;
    let images = EmbeddingMatrix::from_rows(&image_rows)?;
    let texts = EmbeddingMatrix::from_rows(&text_rows)?;
    Dataset::new(corpus, images, texts)
}
