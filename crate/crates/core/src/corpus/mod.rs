//! Data model and file formats: annotations, ICLE embedding matrices and the
//! synthetic benchmark generator.

mod annotations;
pub mod icle;
mod synthetic;
mod types;

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

pub use annotations::{
    annotations_to_string, caption_text_id, convert_cuhk_pedes, load_annotations, load_cuhk_pedes,
    parse_annotations, save_annotations, AnnotationEntry, CuhkPedesRecord,
};
pub use icle::{load_embeddings, save_embeddings};
pub use synthetic::generate_synthetic_benchmark;
pub use types::{normalize_in_place, EmbeddingMatrix, ImageRecord, PersonId, SyntheticBenchConfig, TextRecord};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Json {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("embedding file format: {0}")]
    Format(String),
    #[error("embedding row {row} has zero norm")]
    ZeroRow { row: usize },
    #[error("duplicate {kind} {id:?}")]
    Duplicate { kind: &'static str, id: String },
    #[error("{0}")]
    Validation(String),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    /// Whether the error comes from bad input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Self::Io { .. })
    }
}

/// Gallery images and text queries. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    images: Vec<ImageRecord>,
    texts: Vec<TextRecord>,
}

impl Corpus {
    pub(crate) fn new_unchecked(images: Vec<ImageRecord>, texts: Vec<TextRecord>) -> Self {
        Self { images, texts }
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn texts(&self) -> &[TextRecord] {
        &self.texts
    }

    pub fn image_by_id(&self, image_id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.image_id == image_id)
    }
}

/// A corpus bound to its two embedding matrices.
///
/// Query index `i` always means `corpus.texts()[i]` and gallery index `j`
/// means `corpus.images()[j]`; the matrices returned by [`Dataset::queries`]
/// and [`Dataset::gallery`] are reordered accordingly.
#[derive(Debug, Clone)]
pub struct Dataset {
    corpus: Corpus,
    image_embeddings: EmbeddingMatrix,
    text_embeddings: EmbeddingMatrix,
    queries: EmbeddingMatrix,
    gallery: EmbeddingMatrix,
}

impl Dataset {
    pub fn new(corpus: Corpus, image_embeddings: EmbeddingMatrix, text_embeddings: EmbeddingMatrix) -> Result<Self, CorpusError> {
        if image_embeddings.dim() != text_embeddings.dim() {
            return Err(CorpusError::Validation(format!(
                "image dim {} != text dim {}",
                image_embeddings.dim(),
                text_embeddings.dim()
            )));
        }
        if let Some(img) = corpus.images.iter().find(|i| i.embedding_index >= image_embeddings.rows()) {
            return Err(CorpusError::Validation(format!(
                "image {} references embedding row {} but the image matrix has {} rows",
                img.image_id,
                img.embedding_index,
                image_embeddings.rows()
            )));
        }
        if let Some(t) = corpus.texts.iter().find(|t| t.embedding_index >= text_embeddings.rows()) {
            return Err(CorpusError::Validation(format!(
                "text {} references embedding row {} but the text matrix has {} rows",
                t.text_id,
                t.embedding_index,
                text_embeddings.rows()
            )));
        }
        let gallery = image_embeddings.gather(&corpus.images.iter().map(|i| i.embedding_index).collect::<Vec<_>>());
        let queries = text_embeddings.gather(&corpus.texts.iter().map(|t| t.embedding_index).collect::<Vec<_>>());
        Ok(Self { corpus, image_embeddings, text_embeddings, queries, gallery })
    }

    pub fn load(annotations: impl AsRef<Path>, images: impl AsRef<Path>, texts: impl AsRef<Path>) -> Result<Self, CorpusError> {
        Self::new(load_annotations(annotations)?, load_embeddings(images)?, load_embeddings(texts)?)
    }

    pub fn save(&self, annotations: impl AsRef<Path>, images: impl AsRef<Path>, texts: impl AsRef<Path>) -> Result<(), CorpusError> {
        save_annotations(&self.corpus, annotations)?;
        save_embeddings(&self.image_embeddings, images)?;
        save_embeddings(&self.text_embeddings, texts)
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn image_embeddings(&self) -> &EmbeddingMatrix {
        &self.image_embeddings
    }

    pub fn text_embeddings(&self) -> &EmbeddingMatrix {
        &self.text_embeddings
    }

    /// Query embeddings in text-record order.
    pub fn queries(&self) -> &EmbeddingMatrix {
        &self.queries
    }

    /// Gallery embeddings in image-record order.
    pub fn gallery(&self) -> &EmbeddingMatrix {
        &self.gallery
    }

    /// For every query, the gallery indices of images of the same person.
    pub fn judgments(&self) -> Vec<Vec<usize>> {
        let mut by_person: HashMap<PersonId, Vec<usize>> = HashMap::new();
        for (j, img) in self.corpus.images.iter().enumerate() {
            by_person.entry(img.person_id).or_default().push(j);
        }
        self.corpus
            .texts
            .iter()
            .map(|t| by_person.get(&t.person_id).cloned().unwrap_or_default())
            .collect()
    }
}
