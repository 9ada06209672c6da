use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};

use super::parse::{parse_numbered_list, parse_verdict, truncate_words, word_count};
use super::{BackendKind, LocAnswer, Oracle, OracleError, QuestionSet, RefinedQuery, Refinement, TemplateKind, TemplateSet};
use crate::corpus::{ImageRecord, TextRecord};

/// Refined queries must stay encodable by the text model.
pub const DEFAULT_WORD_CAP: usize = 120;

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub prompt: String,
    pub image: Option<Vec<u8>>,
}

/// A single stateless prompt-in, text-out round trip.
pub trait ChatModel: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn complete(&self, request: &ChatRequest) -> Result<String, OracleError>;
    fn is_concurrent(&self) -> bool {
        true
    }
}

/// Oracle backed by a chat model: renders templates, attaches images and
/// parses replies.
pub struct LlmOracle<C> {
    chat: C,
    templates: TemplateSet,
    questions: QuestionSet,
    word_cap: usize,
    image_root: Option<PathBuf>,
    calls: AtomicU64,
}

impl<C: ChatModel> LlmOracle<C> {
    pub fn new(chat: C) -> Self {
        Self {
            chat,
            templates: TemplateSet::default(),
            questions: QuestionSet::default(),
            word_cap: DEFAULT_WORD_CAP,
            image_root: None,
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_questions(mut self, questions: QuestionSet) -> Self {
        self.questions = questions;
        self
    }

    pub fn with_word_cap(mut self, cap: usize) -> Self {
        self.word_cap = cap.max(1);
        self
    }

    /// Image files are read from `root.join(source_path)`. Without a root
    /// no image bytes are attached.
    pub fn with_image_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.image_root = Some(root.into());
        self
    }

    pub fn chat(&self) -> &C {
        &self.chat
    }

    pub fn questions(&self) -> &QuestionSet {
        &self.questions
    }

    fn image_bytes(&self, image: &ImageRecord) -> Result<Option<Vec<u8>>, OracleError> {
        match &self.image_root {
            None => Ok(None),
            Some(root) => {
                let path = root.join(&image.source_path);
                fs::read(&path).map(Some).map_err(|e| OracleError::Io(format!("{}: {e}", path.display())))
            }
        }
    }

    fn call(&self, kind: TemplateKind, vars: &[(&str, &str)], image: Option<&ImageRecord>) -> Result<String, OracleError> {
        let template = self.templates.get(kind);
        let image = match image {
            Some(img) if template.attaches_image() => self.image_bytes(img)?,
            _ => None,
        };
        self.send(ChatRequest { prompt: template.render(vars), image })
    }

    fn send(&self, request: ChatRequest) -> Result<String, OracleError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.chat.complete(&request)
    }
}

impl<C: ChatModel> Oracle for LlmOracle<C> {
    fn kind(&self) -> BackendKind {
        self.chat.kind()
    }

    fn localize(&self, query: &TextRecord, image: &ImageRecord, _ordinal: u32) -> Result<LocAnswer, OracleError> {
        let raw_reply = self.call(TemplateKind::Loc, &[("query", &query.raw_text)], Some(image))?;
        let verdict = parse_verdict(&raw_reply)?;
        Ok(LocAnswer { verdict, raw_reply })
    }

    fn vqa(&self, questions: &QuestionSet, image: &ImageRecord) -> Result<String, OracleError> {
        self.call(TemplateKind::Vqa, &[("questions", &questions.numbered())], Some(image))
    }

    fn aggregate(&self, answers: &str, query: &TextRecord) -> Result<RefinedQuery, OracleError> {
        if answers.trim().is_empty() {
            return Ok(RefinedQuery {
                refinement: Refinement::Text(query.raw_text.clone()),
                provenance: self.kind(),
                oracle_calls: 0,
            });
        }
        let vars = [("answers", answers), ("query", query.raw_text.as_str())];
        let mut reply = self.call(TemplateKind::Aggr, &vars, None)?.trim().to_string();
        let mut calls = 1;
        if word_count(&reply) > self.word_cap {
            let prompt = format!(
                "{}\nThe description must be at most {} words long.",
                self.templates.aggr.render(&vars),
                self.word_cap
            );
            reply = self.send(ChatRequest { prompt, image: None })?.trim().to_string();
            calls += 1;
            if word_count(&reply) > self.word_cap {
                reply = truncate_words(&reply, self.word_cap);
            }
        }
        if reply.is_empty() {
            return Err(OracleError::Protocol { message: "empty aggregation reply".into(), raw_reply: reply });
        }
        Ok(RefinedQuery { refinement: Refinement::Text(reply), provenance: self.kind(), oracle_calls: calls })
    }

    fn refine_query(&self, query: &TextRecord, anchor: &ImageRecord) -> Result<RefinedQuery, OracleError> {
        let answers = self.vqa(&self.questions, anchor)?;
        let mut refined = self.aggregate(&answers, query)?;
        refined.oracle_calls += 1;
        Ok(refined)
    }

    fn decompose(&self, text: &str) -> Result<Vec<String>, OracleError> {
        let reply = self.call(TemplateKind::Dec, &[("text", text)], None)?;
        parse_numbered_list(&reply)
    }

    fn rewrite(&self, sentence: &str, m: usize) -> Result<Vec<String>, OracleError> {
        if m == 0 {
            return Err(OracleError::Template("rewrite count must be at least 1".into()));
        }
        let count = m.to_string();
        let reply = self.call(TemplateKind::Rwt, &[("text", sentence), ("count", &count)], None)?;
        let items = parse_numbered_list(&reply)?;
        if items.len() != m {
            return Err(OracleError::WrongCount { expected: m, actual: items.len(), raw_reply: reply });
        }
        Ok(items)
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn is_concurrent(&self) -> bool {
        self.chat.is_concurrent()
    }
}
