use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_style_matrix, combination_count, enrich, reorganize, AugmentedText};
use crate::corpus::{Corpus, ImageRecord, PersonId, TextRecord};
use crate::oracle::{Oracle, OracleError};
use crate::seeding::keyed_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Styles per sub-sentence, the original included.
    pub m: usize,
    pub per_text_count: usize,
    pub seed: u64,
    pub max_inflight: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { m: super::DEFAULT_STYLES, per_text_count: super::DEFAULT_PER_TEXT_COUNT, seed: 0, max_inflight: 4 }
    }
}

/// One line of the augmented corpus. Originals carry empty provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentedRecord {
    pub text_id: String,
    pub source_text_id: String,
    pub person_id: PersonId,
    pub text: String,
    pub permutation: Vec<usize>,
    pub style_choices: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AugmentStats {
    pub texts: usize,
    pub augmented_texts: usize,
    pub skipped_texts: usize,
    pub augmentations: usize,
    /// Rewrites identical to the sub-sentence they were asked to restyle.
    pub duplicate_rewrites: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedCorpus {
    pub records: Vec<AugmentedRecord>,
    pub stats: AugmentStats,
    /// `(text_id, reason)` for every text left unaugmented.
    pub skipped: Vec<(String, String)>,
}

fn original(text: &TextRecord) -> AugmentedRecord {
    AugmentedRecord {
        text_id: text.text_id.clone(),
        source_text_id: text.text_id.clone(),
        person_id: text.person_id,
        text: text.raw_text.clone(),
        permutation: Vec::new(),
        style_choices: Vec::new(),
    }
}

fn augment_one(
    text: &TextRecord,
    image: Option<&ImageRecord>,
    oracle: &dyn Oracle,
    config: &AugmentConfig,
) -> Result<(Vec<AugmentedText>, usize), OracleError> {
    let image = image.ok_or_else(|| OracleError::Io(format!("image {:?} not in corpus", text.image_id)))?;
    let enriched = enrich(text, image, oracle)?;
    let (matrix, duplicates) = build_style_matrix(&enriched, config.m, oracle)?;
    let space = combination_count(matrix.n(), matrix.m()).unwrap_or(u128::MAX);
    let count = (config.per_text_count as u128).min(space) as usize;
    let seed = keyed_seed(config.seed, &[text.text_id.as_bytes()]);
    Ok((reorganize(&text.text_id, &matrix, count, seed), duplicates))
}

/// Runs enrich → decompose/rewrite → reorganize for every caption and mixes
/// the results with the originals.
///
/// Records are grouped by source caption in corpus order, the original
/// first, then its augmentations `{text_id}~aug{j}`. Output bytes do not
/// depend on scheduling. A caption whose oracle calls fail keeps only its
/// original and is counted as skipped.
pub fn generate_augmented_corpus(
    corpus: &Corpus,
    oracle: &dyn Oracle,
    config: &AugmentConfig,
) -> Result<AugmentedCorpus, OracleError> {
    if config.m == 0 {
        return Err(OracleError::Template("style count m must be at least 1".into()));
    }
    if config.max_inflight == 0 {
        return Err(OracleError::Template("max in-flight oracle calls must be at least 1".into()));
    }
    let texts = corpus.texts();
    let mut stats = AugmentStats { texts: texts.len(), ..Default::default() };
    if config.per_text_count == 0 {
        return Ok(AugmentedCorpus { records: texts.iter().map(original).collect(), stats, skipped: Vec::new() });
    }

    let images: HashMap<&str, &ImageRecord> = corpus.images().iter().map(|i| (i.image_id.as_str(), i)).collect();
    let job = |t: &TextRecord| augment_one(t, images.get(t.image_id.as_str()).copied(), oracle, config);
    let results: Vec<_> = if oracle.is_concurrent() {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.max_inflight)
            .build()
            .map_err(|e| OracleError::Io(e.to_string()))?;
        pool.install(|| texts.par_iter().map(job).collect())
    } else {
        texts.iter().map(job).collect()
    };

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (text, result) in texts.iter().zip(results) {
        records.push(original(text));
        match result {
            Ok((augmented, duplicates)) => {
                stats.augmented_texts += 1;
                stats.augmentations += augmented.len();
                stats.duplicate_rewrites += duplicates;
                records.extend(augmented.into_iter().enumerate().map(|(j, a)| AugmentedRecord {
                    text_id: format!("{}~aug{j}", text.text_id),
                    source_text_id: text.text_id.clone(),
                    person_id: text.person_id,
                    text: a.rendered,
                    permutation: a.permutation,
                    style_choices: a.style_choices,
                }));
            }
            Err(e) => {
                log::warn!("augmentation skipped for {}: {e}", text.text_id);
                stats.skipped_texts += 1;
                skipped.push((text.text_id.clone(), e.to_string()));
            }
        }
    }
    Ok(AugmentedCorpus { records, stats, skipped })
}

pub fn write_augmented_jsonl<W: Write>(mut out: W, records: &[AugmentedRecord]) -> std::io::Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_augmented_jsonl<R: BufRead>(input: R) -> std::io::Result<Vec<AugmentedRecord>> {
    let mut records = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1)))?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AnnotationEntry;
    use crate::oracle::{LlmOracle, ScriptedChat};

    fn corpus() -> Corpus {
        let entry = |id: &str, pid: u64, caps: &[&str], img: usize, first_text: usize| AnnotationEntry {
            image_id: id.into(),
            person_id: pid,
            file_path: format!("{id}.jpg"),
            captions: caps.iter().map(|s| s.to_string()).collect(),
            image_embedding_index: img,
            caption_embedding_indices: (first_text..first_text + caps.len()).collect(),
        };
        Corpus::from_entries(vec![entry("a", 1, &["A man.", "A tall man."], 0, 0), entry("b", 2, &["A woman."], 1, 2)])
            .unwrap()
    }

    fn scripted(replies: Vec<String>) -> LlmOracle<ScriptedChat> {
        LlmOracle::new(ScriptedChat::new(replies))
    }

    /// vqa, aggregate, decompose into `n`, then one rewrite per sub-sentence.
    fn script_for(n: usize, m: usize, tag: &str) -> Vec<String> {
        let mut r = vec!["1. answer".to_string(), format!("enriched {tag}")];
        r.push((1..=n).map(|i| format!("{i}. {tag} part {i}")).collect::<Vec<_>>().join("\n"));
        if m > 1 {
            for i in 1..=n {
                r.push((1..m).map(|j| format!("{j}. {tag} part {i} style {j}")).collect::<Vec<_>>().join("\n"));
            }
        }
        r
    }

    #[test]
    fn zero_count_returns_originals() {
        let c = corpus();
        let o = scripted(vec![]);
        let out = generate_augmented_corpus(&c, &o, &AugmentConfig { per_text_count: 0, ..Default::default() }).unwrap();
        assert_eq!(out.records.len(), 3);
        assert!(out.records.iter().zip(c.texts()).all(|(r, t)| r.text == t.raw_text && r.permutation.is_empty()));
        assert_eq!(o.calls(), 0);
    }

    #[test]
    fn counts_are_capped_by_the_space() {
        // texts: n=1,m=2 (space 2) ; n=2,m=2 (space 8) ; n=3,m=2 (space 48)
        let mut replies = script_for(1, 2, "x");
        replies.extend(script_for(2, 2, "y"));
        replies.extend(script_for(3, 2, "z"));
        let cfg = AugmentConfig { m: 2, per_text_count: 10, seed: 3, max_inflight: 1 };
        let out = generate_augmented_corpus(&corpus(), &scripted(replies), &cfg).unwrap();
        assert_eq!(out.stats.augmentations, 2 + 8 + 10);
        assert_eq!(out.records.len(), 3 + 20);
        assert_eq!(out.records[1].text_id, "a#0~aug0");
        assert!(out.records.iter().all(|r| r.person_id == if r.source_text_id.starts_with('a') { PersonId(1) } else { PersonId(2) }));
    }

    #[test]
    fn oracle_failure_keeps_original() {
        let mut replies = script_for(2, 1, "x");
        replies.extend(["1. a".to_string(), "enriched".to_string(), "no list here".to_string()]);
        replies.extend(script_for(1, 1, "z"));
        let cfg = AugmentConfig { m: 1, per_text_count: 2, seed: 3, max_inflight: 1 };
        let out = generate_augmented_corpus(&corpus(), &scripted(replies), &cfg).unwrap();
        assert_eq!(out.stats.skipped_texts, 1);
        assert_eq!(out.skipped[0].0, "a#1");
        assert_eq!(out.stats.augmentations, 2 + 1);
        assert_eq!(out.records.iter().filter(|r| r.source_text_id == "a#1").count(), 1);
    }

    #[test]
    fn jsonl_round_trip() {
        let out = generate_augmented_corpus(&corpus(), &scripted(vec![]), &AugmentConfig { per_text_count: 0, ..Default::default() })
            .unwrap();
        let mut buf = Vec::new();
        write_augmented_jsonl(&mut buf, &out.records).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with(
            r#"{"text_id":"a#0","source_text_id":"a#0","person_id":1,"text":"A man.","permutation":[],"style_choices":[]}"#
        ));
        assert_eq!(read_augmented_jsonl(&buf[..]).unwrap(), out.records);
    }
}
