//! Text augmentation by recombination, and Yes/No instruction-tuning data
//! for anchor localization.
//!
//! A caption is enriched with details from its image, split into
//! independent sub-sentences, each sub-sentence is rewritten in several
//! styles, and new captions are assembled from a random order and a random
//! style per slot.

mod augment;
mod reorganize;
mod sft;

use serde::{Deserialize, Serialize};

use crate::corpus::{ImageRecord, TextRecord};
use crate::oracle::{Oracle, OracleError, Refinement};

pub use augment::{
    generate_augmented_corpus, read_augmented_jsonl, write_augmented_jsonl, AugmentConfig, AugmentStats,
    AugmentedCorpus, AugmentedRecord,
};
pub use reorganize::{combination_count, reorganize, AugmentedText};
pub use sft::{
    build_sft_dataset, export_sft, sft_to_json, validate_sft_json, NegativeRule, Polarity, SftConfig, SftDataset,
    SftSample, SftStats, HARD_NEGATIVES,
};

/// Default rewrites per sub-sentence, the original included.
pub const DEFAULT_STYLES: usize = 3;
pub const DEFAULT_PER_TEXT_COUNT: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedText {
    pub text_id: String,
    pub original: String,
    pub enriched: String,
}

/// Sub-sentences of one caption and their style variants. Entry 0 of every
/// row is the sub-sentence itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleMatrix {
    styles: Vec<Vec<String>>,
}

impl StyleMatrix {
    /// Every row must be non-empty and all rows must have the same length.
    pub fn new(styles: Vec<Vec<String>>) -> Result<Self, OracleError> {
        let Some(m) = styles.first().map(Vec::len) else {
            return Err(OracleError::Template("style matrix needs at least one sub-sentence".into()));
        };
        if m == 0 || styles.iter().any(|r| r.len() != m) {
            return Err(OracleError::Template("style matrix rows must share a non-zero length".into()));
        }
        Ok(Self { styles })
    }

    /// A matrix whose only style is the sub-sentence itself.
    pub fn originals(sub_sentences: Vec<String>) -> Result<Self, OracleError> {
        Self::new(sub_sentences.into_iter().map(|s| vec![s]).collect())
    }

    pub fn n(&self) -> usize {
        self.styles.len()
    }

    pub fn m(&self) -> usize {
        self.styles[0].len()
    }

    pub fn sub_sentences(&self) -> impl Iterator<Item = &str> {
        self.styles.iter().map(|r| r[0].as_str())
    }

    pub fn styles(&self, i: usize) -> &[String] {
        &self.styles[i]
    }

    /// Renders one selection: `permutation[k]` is the sub-sentence in slot
    /// `k` and `style_choices[i]` the style used for sub-sentence `i`.
    pub fn render(&self, permutation: &[usize], style_choices: &[usize]) -> String {
        permutation
            .iter()
            .map(|&i| self.styles[i][style_choices[i]].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Collapses whitespace and ends the sentence with exactly one terminal
/// mark, so rendering is a pure function of the matrix and the selection.
pub fn normalize_sentence(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    let body = collapsed.trim_end_matches(['.', ',', ';', ':', ' ']);
    if body.is_empty() {
        return String::new();
    }
    if body.ends_with(['!', '?']) {
        body.to_string()
    } else {
        format!("{body}.")
    }
}

/// Adds the image's details to the caption with one VQA and one
/// aggregation call. `image` should be the caption's own image.
pub fn enrich(text: &TextRecord, image: &ImageRecord, oracle: &dyn Oracle) -> Result<EnrichedText, OracleError> {
    let refined = oracle.refine_query(text, image)?;
    let Refinement::Text(enriched) = refined.refinement else {
        return Err(OracleError::Unsupported { backend: oracle.kind(), operation: "text enrichment" });
    };
    if enriched.trim().is_empty() {
        return Err(OracleError::Protocol { message: "empty enriched text".into(), raw_reply: enriched });
    }
    Ok(EnrichedText { text_id: text.text_id.clone(), original: text.raw_text.clone(), enriched })
}

/// Decomposes `enriched` and asks for `m - 1` rewrites of every
/// sub-sentence. Returns the matrix and how many rewrites merely repeated
/// their input.
pub fn build_style_matrix(enriched: &EnrichedText, m: usize, oracle: &dyn Oracle) -> Result<(StyleMatrix, usize), OracleError> {
    if m == 0 {
        return Err(OracleError::Template("style count m must be at least 1".into()));
    }
    let subs: Vec<String> = oracle
        .decompose(&enriched.enriched)?
        .iter()
        .map(|s| normalize_sentence(s))
        .filter(|s| !s.is_empty())
        .collect();
    if subs.is_empty() {
        return Err(OracleError::Protocol {
            message: "decomposition produced no sub-sentences".into(),
            raw_reply: enriched.enriched.clone(),
        });
    }
    let mut duplicates = 0;
    let mut rows = Vec::with_capacity(subs.len());
    for sub in subs {
        let mut row = vec![sub];
        if m > 1 {
            for variant in oracle.rewrite(&row[0], m - 1)? {
                let variant = normalize_sentence(&variant);
                if variant.is_empty() {
                    return Err(OracleError::Protocol { message: "empty rewrite".into(), raw_reply: variant });
                }
                if variant == row[0] {
                    duplicates += 1;
                }
                row.push(variant);
            }
        }
        rows.push(row);
    }
    Ok((StyleMatrix::new(rows)?, duplicates))
}
