use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::{Corpus, ImageRecord, PersonId};
use crate::oracle::{OracleError, PromptTemplate, TemplateKind};
use crate::retrieval::RankedList;
use crate::seeding::keyed_seed;

/// Ranking depth searched for hard negatives.
pub const HARD_NEGATIVES: usize = 10;
pub const DEFAULT_SAMPLED_TEXTS: usize = 10_000;

/// Placeholder the trainer replaces with the image.
const IMAGE_TAG: &str = "<image>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeRule {
    /// Different-person images among the top 10 of the ranking. A query
    /// whose top 10 are all its own person gets no negatives.
    #[default]
    TopTenFiltered,
    /// The first 10 different-person images, scanning as deep as needed.
    FirstTenDifferent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SftSample {
    pub text_id: String,
    pub query_person_id: PersonId,
    pub image_id: String,
    pub image_person_id: PersonId,
    pub image_path: String,
    /// Rendered localization prompt, without the image tag.
    pub prompt: String,
    pub polarity: Polarity,
}

impl SftSample {
    pub fn response(&self) -> &'static str {
        match self.polarity {
            Polarity::Positive => "Yes",
            Polarity::Negative => "No",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftConfig {
    /// Captions sampled for positives; `None` means
    /// `min(10 000, eligible captions)`.
    pub sampled_texts: Option<usize>,
    pub seed: u64,
    pub negative_rule: NegativeRule,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SftStats {
    pub eligible_texts: usize,
    pub excluded_texts: usize,
    pub sampled_texts: usize,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SftDataset {
    /// Each sampled caption's positive followed by its negatives.
    pub samples: Vec<SftSample>,
    pub stats: SftStats,
}

fn sample(text_id: &str, query_person: PersonId, image: &ImageRecord, prompt: &str, polarity: Polarity) -> SftSample {
    SftSample {
        text_id: text_id.to_string(),
        query_person_id: query_person,
        image_id: image.image_id.clone(),
        image_person_id: image.person_id,
        image_path: image.source_path.clone(),
        prompt: prompt.to_string(),
        polarity,
    }
}

/// Yes/No localization pairs: each sampled caption with its own image, and
/// with the highest-ranked images of other people.
///
/// `rankings[i]` must be caption `i`'s ranking over `corpus.images()`.
/// Captions whose person has no image are excluded. Sampling is a pure
/// function of `config.seed`.
pub fn build_sft_dataset(
    corpus: &Corpus,
    rankings: &[RankedList],
    template: &PromptTemplate,
    config: &SftConfig,
) -> Result<SftDataset, OracleError> {
    if template.kind() != TemplateKind::Loc {
        return Err(OracleError::Template("SFT prompts need the localization template".into()));
    }
    let texts = corpus.texts();
    let images = corpus.images();
    if rankings.len() != texts.len() {
        return Err(OracleError::Template(format!("{} rankings for {} captions", rankings.len(), texts.len())));
    }
    for (i, r) in rankings.iter().enumerate() {
        if r.query_index != i || r.entries.iter().any(|&(g, _)| g >= images.len()) {
            return Err(OracleError::Template(format!("ranking {i} does not match the corpus")));
        }
    }

    let mut first_image_of: HashMap<PersonId, &ImageRecord> = HashMap::new();
    for img in images {
        first_image_of.entry(img.person_id).or_insert(img);
    }
    let by_id: HashMap<&str, &ImageRecord> = images.iter().map(|i| (i.image_id.as_str(), i)).collect();

    let mut eligible = Vec::new();
    for (q, t) in texts.iter().enumerate() {
        let own = by_id.get(t.image_id.as_str()).copied().filter(|i| i.person_id == t.person_id);
        match own.or_else(|| first_image_of.get(&t.person_id).copied()) {
            Some(img) => eligible.push((q, img)),
            None => log::warn!("caption {} excluded: person {} has no image", t.text_id, t.person_id.0),
        }
    }
    let mut stats = SftStats { eligible_texts: eligible.len(), excluded_texts: texts.len() - eligible.len(), ..Default::default() };
    let wanted = config.sampled_texts.unwrap_or(DEFAULT_SAMPLED_TEXTS).min(eligible.len());

    let mut rng = ChaCha8Rng::seed_from_u64(keyed_seed(config.seed, &[b"sft"]));
    let mut picked = rand::seq::index::sample(&mut rng, eligible.len(), wanted).into_vec();
    picked.sort_unstable();

    let mut samples = Vec::new();
    for i in picked {
        let (q, gt) = eligible[i];
        let t = &texts[q];
        let prompt = template.render(&[("query", &t.raw_text)]);
        samples.push(sample(&t.text_id, t.person_id, gt, &prompt, Polarity::Positive));
        stats.positives += 1;
        let depth = match config.negative_rule {
            NegativeRule::TopTenFiltered => HARD_NEGATIVES.min(rankings[q].len()),
            NegativeRule::FirstTenDifferent => rankings[q].len(),
        };
        let negatives = rankings[q].entries[..depth]
            .iter()
            .map(|&(g, _)| &images[g])
            .filter(|img| img.person_id != t.person_id)
            .take(HARD_NEGATIVES);
        for img in negatives {
            samples.push(sample(&t.text_id, t.person_id, img, &prompt, Polarity::Negative));
            stats.negatives += 1;
        }
    }
    stats.sampled_texts = stats.positives;
    Ok(SftDataset { samples, stats })
}

/// Conversation records: a user turn with the image tag and prompt, an
/// assistant turn with the answer, and the image path.
pub fn sft_to_json(dataset: &SftDataset) -> Value {
    Value::Array(
        dataset
            .samples
            .iter()
            .map(|s| {
                json!({
                    "messages": [
                        {"role": "user", "content": format!("{IMAGE_TAG}{}", s.prompt)},
                        {"role": "assistant", "content": s.response()},
                    ],
                    "images": [s.image_path],
                })
            })
            .collect(),
    )
}

pub fn export_sft(dataset: &SftDataset, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(&sft_to_json(dataset)).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

/// Checks an export against the conversation schema and returns
/// `(positives, negatives)`.
pub fn validate_sft_json(value: &Value) -> Result<(usize, usize), String> {
    let records = value.as_array().ok_or("top level is not an array")?;
    let (mut yes, mut no) = (0, 0);
    for (i, r) in records.iter().enumerate() {
        let err = |m: &str| format!("record {i}: {m}");
        let obj = r.as_object().ok_or_else(|| err("not an object"))?;
        if obj.len() != 2 {
            return Err(err("expected exactly the keys messages and images"));
        }
        let messages = obj.get("messages").and_then(Value::as_array).ok_or_else(|| err("messages missing"))?;
        let images = obj.get("images").and_then(Value::as_array).ok_or_else(|| err("images missing"))?;
        if messages.len() != 2 {
            return Err(err("expected a user and an assistant message"));
        }
        let turn = |m: &Value, role: &str| -> Result<String, String> {
            let o = m.as_object().filter(|o| o.len() == 2).ok_or_else(|| err("malformed message"))?;
            if o.get("role").and_then(Value::as_str) != Some(role) {
                return Err(err(&format!("expected role {role}")));
            }
            o.get("content").and_then(Value::as_str).map(str::to_string).ok_or_else(|| err("content is not a string"))
        };
        let user = turn(&messages[0], "user")?;
        if user.matches(IMAGE_TAG).count() != images.len() {
            return Err(err("image tags do not match the image list"));
        }
        if images.len() != 1 || !images[0].is_string() {
            return Err(err("expected exactly one image path"));
        }
        match turn(&messages[1], "assistant")?.as_str() {
            "Yes" => yes += 1,
            "No" => no += 1,
            other => return Err(err(&format!("answer {other:?} is neither Yes nor No"))),
        }
    }
    Ok((yes, no))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AnnotationEntry;

    /// Persons 0..4 with one image and one caption each.
    fn corpus(persons: u64) -> Corpus {
        Corpus::from_entries(
            (0..persons)
                .map(|p| AnnotationEntry {
                    image_id: format!("i{p}"),
                    person_id: p,
                    file_path: format!("imgs/{p}.jpg"),
                    captions: vec![format!("person {p}")],
                    image_embedding_index: p as usize,
                    caption_embedding_indices: vec![p as usize],
                })
                .collect(),
        )
        .unwrap()
    }

    fn ranking(q: usize, order: &[usize]) -> RankedList {
        RankedList { query_index: q, entries: order.iter().enumerate().map(|(r, &g)| (g, 1.0 - r as f32 * 0.01)).collect() }
    }

    fn loc() -> PromptTemplate {
        PromptTemplate::default_for(TemplateKind::Loc)
    }

    #[test]
    fn one_text_gives_one_positive_and_its_negatives() {
        let c = corpus(3);
        let rankings = vec![ranking(0, &[1, 0, 2]), ranking(1, &[1, 2, 0]), ranking(2, &[0, 1, 2])];
        let cfg = SftConfig { sampled_texts: Some(1), seed: 4, negative_rule: NegativeRule::default() };
        let d = build_sft_dataset(&c, &rankings, &loc(), &cfg).unwrap();
        assert_eq!(d.stats.positives, 1);
        assert_eq!(d.stats.negatives, 2);
        assert_eq!(d.samples[0].polarity, Polarity::Positive);
        assert!(d.samples[1..].iter().all(|s| s.image_person_id != s.query_person_id));
    }

    #[test]
    fn top_ten_rule_does_not_scan_deeper() {
        // 12 images: 11 of person 0, then one of person 1 at rank 12
        let mut entries: Vec<AnnotationEntry> = (0..11)
            .map(|j| AnnotationEntry {
                image_id: format!("a{j}"),
                person_id: 0,
                file_path: String::new(),
                captions: if j == 0 { vec!["x".into()] } else { vec![] },
                image_embedding_index: j,
                caption_embedding_indices: if j == 0 { vec![0] } else { vec![] },
            })
            .collect();
        entries.push(AnnotationEntry {
            image_id: "b".into(),
            person_id: 1,
            file_path: String::new(),
            captions: vec![],
            image_embedding_index: 11,
            caption_embedding_indices: vec![],
        });
        let c = Corpus::from_entries(entries).unwrap();
        let rankings = vec![ranking(0, &(0..12).collect::<Vec<_>>())];
        let top = SftConfig { sampled_texts: None, seed: 0, negative_rule: NegativeRule::TopTenFiltered };
        assert_eq!(build_sft_dataset(&c, &rankings, &loc(), &top).unwrap().stats.negatives, 0);
        let deep = SftConfig { negative_rule: NegativeRule::FirstTenDifferent, ..top };
        assert_eq!(build_sft_dataset(&c, &rankings, &loc(), &deep).unwrap().stats.negatives, 1);
    }

    #[test]
    fn negatives_capped_at_ten() {
        let c = corpus(15);
        let order: Vec<usize> = (0..15).rev().collect();
        let rankings: Vec<_> = (0..15).map(|q| ranking(q, &order)).collect();
        let cfg = SftConfig { sampled_texts: None, seed: 1, negative_rule: NegativeRule::FirstTenDifferent };
        let d = build_sft_dataset(&c, &rankings, &loc(), &cfg).unwrap();
        assert_eq!(d.stats.sampled_texts, 15);
        assert_eq!(d.stats.negatives, 15 * 10);
    }

    #[test]
    fn sampling_is_deterministic() {
        let c = corpus(30);
        let rankings: Vec<_> = (0..30).map(|q| ranking(q, &(0..30).collect::<Vec<_>>())).collect();
        let cfg = SftConfig { sampled_texts: Some(7), seed: 11, negative_rule: NegativeRule::default() };
        let a = build_sft_dataset(&c, &rankings, &loc(), &cfg).unwrap();
        assert_eq!(a, build_sft_dataset(&c, &rankings, &loc(), &cfg).unwrap());
        assert_eq!(a.stats.positives, 7);
        let b = build_sft_dataset(&c, &rankings, &loc(), &SftConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.samples, b.samples);
    }

    #[test]
    fn export_shape_and_validation() {
        let c = corpus(2);
        let rankings = vec![ranking(0, &[0, 1]), ranking(1, &[0, 1])];
        let cfg = SftConfig { sampled_texts: Some(1), seed: 0, negative_rule: NegativeRule::default() };
        let d = build_sft_dataset(&c, &rankings, &loc(), &cfg).unwrap();
        let v = sft_to_json(&d);
        assert_eq!(v[0]["messages"][1]["content"], "Yes");
        assert!(v[0]["messages"][0]["content"].as_str().unwrap().starts_with("<image>Can this text"));
        assert_eq!(validate_sft_json(&v).unwrap(), (1, 1));

        let mut bad = v.clone();
        bad[0]["messages"][1]["content"] = json!("Maybe");
        assert!(validate_sft_json(&bad).is_err());
        let mut bad = v;
        bad[0]["images"] = json!([]);
        assert!(validate_sft_json(&bad).is_err());
    }

    #[test]
    fn mismatched_rankings_rejected() {
        let c = corpus(2);
        let cfg = SftConfig { sampled_texts: None, seed: 0, negative_rule: NegativeRule::default() };
        assert!(build_sft_dataset(&c, &[ranking(0, &[0, 1])], &loc(), &cfg).is_err());
        assert!(build_sft_dataset(&c, &[ranking(0, &[0, 5]), ranking(1, &[0, 1])], &loc(), &cfg).is_err());
    }
}
