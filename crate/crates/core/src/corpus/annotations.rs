use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, ImageRecord, PersonId, TextRecord};

/// One object of the annotation JSON array: an image and its captions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationEntry {
    pub image_id: String,
    pub person_id: u64,
    pub file_path: String,
    pub captions: Vec<String>,
    pub image_embedding_index: usize,
    pub caption_embedding_indices: Vec<usize>,
}

/// Text ids are derived from the owning image and the caption position.
pub fn caption_text_id(image_id: &str, caption: usize) -> String {
    format!("{image_id}#{caption}")
}

impl Corpus {
    pub fn from_entries(entries: Vec<AnnotationEntry>) -> Result<Self, CorpusError> {
        let mut images = Vec::with_capacity(entries.len());
        let mut texts = Vec::new();
        let mut image_ids = HashSet::new();
        let mut image_rows = HashSet::new();
        let mut text_rows = HashSet::new();
        for entry in entries {
            if !image_ids.insert(entry.image_id.clone()) {
                return Err(CorpusError::Duplicate { kind: "image_id", id: entry.image_id });
            }
            if !image_rows.insert(entry.image_embedding_index) {
                return Err(CorpusError::Duplicate {
                    kind: "image_embedding_index",
                    id: entry.image_embedding_index.to_string(),
                });
            }
            if entry.captions.len() != entry.caption_embedding_indices.len() {
                return Err(CorpusError::Validation(format!(
                    "image {}: {} captions but {} caption embedding indices",
                    entry.image_id,
                    entry.captions.len(),
                    entry.caption_embedding_indices.len()
                )));
            }
            let person_id = PersonId(entry.person_id);
            for (j, (caption, &row)) in entry.captions.iter().zip(&entry.caption_embedding_indices).enumerate() {
                if caption.trim().is_empty() {
                    return Err(CorpusError::Validation(format!(
                        "image {}: caption {j} is empty",
                        entry.image_id
                    )));
                }
                if !text_rows.insert(row) {
                    return Err(CorpusError::Duplicate { kind: "caption_embedding_index", id: row.to_string() });
                }
                texts.push(TextRecord {
                    text_id: caption_text_id(&entry.image_id, j),
                    person_id,
                    raw_text: caption.clone(),
                    embedding_index: row,
                    image_id: entry.image_id.clone(),
                });
            }
            images.push(ImageRecord {
                image_id: entry.image_id,
                person_id,
                source_path: entry.file_path,
                embedding_index: entry.image_embedding_index,
            });
        }
        Ok(Self::new_unchecked(images, texts))
    }

    /// Regroups texts under their images, in image order.
    pub fn to_entries(&self) -> Vec<AnnotationEntry> {
        self.images
            .iter()
            .map(|img| {
                let own: Vec<&TextRecord> = self.texts.iter().filter(|t| t.image_id == img.image_id).collect();
                AnnotationEntry {
                    image_id: img.image_id.clone(),
                    person_id: img.person_id.0,
                    file_path: img.source_path.clone(),
                    captions: own.iter().map(|t| t.raw_text.clone()).collect(),
                    image_embedding_index: img.embedding_index,
                    caption_embedding_indices: own.iter().map(|t| t.embedding_index).collect(),
                }
            })
            .collect()
    }
}

fn json_error(path: Option<&Path>, e: serde_json::Error) -> CorpusError {
    CorpusError::Json {
        path: path.map(|p| p.display().to_string()).unwrap_or_else(|| "<memory>".into()),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

pub fn parse_annotations(text: &str) -> Result<Corpus, CorpusError> {
    let entries: Vec<AnnotationEntry> = serde_json::from_str(text).map_err(|e| json_error(None, e))?;
    Corpus::from_entries(entries)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let entries: Vec<AnnotationEntry> = serde_json::from_str(&text).map_err(|e| json_error(Some(path), e))?;
    Corpus::from_entries(entries)
}

pub fn annotations_to_string(corpus: &Corpus) -> String {
    let mut s = serde_json::to_string_pretty(&corpus.to_entries()).expect("annotation entries serialize");
    s.push('\n');
    s
}

pub fn save_annotations(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, annotations_to_string(corpus)).map_err(|e| CorpusError::io(path, e))
}

/// A record of the public CUHK-PEDES `reid_raw.json` layout. Extra fields
/// (`processed_tokens`, ...) are ignored.
#[derive(Debug, Clone, Deserialize)]
pub struct CuhkPedesRecord {
    pub id: u64,
    pub file_path: String,
    pub captions: Vec<String>,
    #[serde(default)]
    pub split: Option<String>,
}

/// Converts CUHK-PEDES-style records into annotation entries. The image id
/// is the file path; embedding rows are assigned in record order, captions
/// numbered consecutively across the whole file.
pub fn convert_cuhk_pedes(records: &[CuhkPedesRecord], split: Option<&str>) -> Vec<AnnotationEntry> {
    let mut next_caption = 0usize;
    records
        .iter()
        .filter(|r| split.is_none() || r.split.as_deref() == split)
        .enumerate()
        .map(|(i, r)| {
            let indices = (next_caption..next_caption + r.captions.len()).collect();
            next_caption += r.captions.len();
            AnnotationEntry {
                image_id: r.file_path.clone(),
                person_id: r.id,
                file_path: r.file_path.clone(),
                captions: r.captions.clone(),
                image_embedding_index: i,
                caption_embedding_indices: indices,
            }
        })
        .collect()
}

pub fn load_cuhk_pedes(path: impl AsRef<Path>, split: Option<&str>) -> Result<Vec<AnnotationEntry>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let records: Vec<CuhkPedesRecord> = serde_json::from_str(&text).map_err(|e| json_error(Some(path), e))?;
    Ok(convert_cuhk_pedes(&records, split))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"[{"image_id": "a", "person_id": 3, "file_path": "a.jpg",
        "captions": ["A man in a red coat."], "image_embedding_index": 0, "caption_embedding_indices": [0]}]"#;

    #[test]
    fn smallest_valid_corpus() {
        let c = parse_annotations(MINIMAL).unwrap();
        assert_eq!(c.images().len(), 1);
        assert_eq!(c.texts().len(), 1);
        assert_eq!(c.texts()[0].person_id, c.images()[0].person_id);
        assert_eq!(c.texts()[0].text_id, "a#0");
    }

    #[test]
    fn duplicate_image_id_rejected() {
        let text = r#"[
          {"image_id": "a", "person_id": 1, "file_path": "a.jpg", "captions": [], "image_embedding_index": 0, "caption_embedding_indices": []},
          {"image_id": "a", "person_id": 2, "file_path": "b.jpg", "captions": [], "image_embedding_index": 1, "caption_embedding_indices": []}
        ]"#;
        assert!(matches!(parse_annotations(text), Err(CorpusError::Duplicate { kind: "image_id", .. })));
    }

    #[test]
    fn duplicate_caption_row_rejected() {
        let text = r#"[{"image_id": "a", "person_id": 1, "file_path": "a.jpg", "captions": ["x", "y"],
            "image_embedding_index": 0, "caption_embedding_indices": [4, 4]}]"#;
        assert!(matches!(parse_annotations(text), Err(CorpusError::Duplicate { .. })));
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = parse_annotations("[\n{\"image_id\": \"a\",\n oops}]").unwrap_err();
        match err {
            CorpusError::Json { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_caption_rejected() {
        let text = r#"[{"image_id": "a", "person_id": 1, "file_path": "a.jpg", "captions": ["  "],
            "image_embedding_index": 0, "caption_embedding_indices": [0]}]"#;
        assert!(matches!(parse_annotations(text), Err(CorpusError::Validation(_))));
    }

    #[test]
    fn cuhk_fixture_converts_with_hand_counted_sizes() {
        // 10 records, 3 in the test split; captions per record written out below.
        let fixture = r#"[
          {"id": 1, "file_path": "CUHK01/0001001.png", "captions": ["a", "b"], "split": "train", "processed_tokens": []},
          {"id": 1, "file_path": "CUHK01/0001002.png", "captions": ["c", "d"], "split": "train"},
          {"id": 2, "file_path": "CUHK01/0002001.png", "captions": ["e", "f"], "split": "train"},
          {"id": 2, "file_path": "CUHK01/0002002.png", "captions": ["g"], "split": "train"},
          {"id": 3, "file_path": "cam_a/003.jpg", "captions": ["h", "i"], "split": "val"},
          {"id": 4, "file_path": "cam_b/004.jpg", "captions": ["j", "k"], "split": "val"},
          {"id": 5, "file_path": "test_query/p5_s1.jpg", "captions": ["l", "m"], "split": "test"},
          {"id": 5, "file_path": "test_query/p5_s2.jpg", "captions": ["n"], "split": "test"},
          {"id": 6, "file_path": "test_query/p6_s1.jpg", "captions": ["o", "p"], "split": "test"},
          {"id": 7, "file_path": "train_query/p7.jpg", "captions": ["q", "r"], "split": "train"}
        ]"#;
        let records: Vec<CuhkPedesRecord> = serde_json::from_str(fixture).unwrap();
        let all = Corpus::from_entries(convert_cuhk_pedes(&records, None)).unwrap();
        assert_eq!(all.images().len(), 10);
        assert_eq!(all.texts().len(), 18);
        let test = Corpus::from_entries(convert_cuhk_pedes(&records, Some("test"))).unwrap();
        assert_eq!(test.images().len(), 3);
        assert_eq!(test.texts().len(), 5);
        assert_eq!(test.texts()[4].embedding_index, 4);
        assert_eq!(test.images()[2].embedding_index, 2);
    }
}
