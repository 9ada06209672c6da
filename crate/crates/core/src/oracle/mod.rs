//! The multimodal LLM oracle.
//!
//! [`Oracle`] is the interface the re-ranking engine and the augmentation
//! pipeline talk to. Three backends implement it:
//!
//! * [`LlmOracle`] over [`WireChat`]: a chat-completions HTTP service.
//! * [`LlmOracle`] over [`ScriptedChat`]: replays canned replies in order,
//!   for exact tests.
//! * [`SimulatedOracle`]: ground-truth-aware double with a tunable error
//!   rate, for desk-scale end-to-end runs.

mod embedder;
mod llm;
pub mod parse;
mod scripted;
mod simulated;
mod templates;
mod wire;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ImageRecord, TextRecord};

pub use embedder::{HttpEmbedder, QueryEmbedder, RefinedEmbeddingTable};
pub use llm::{ChatModel, ChatRequest, LlmOracle, DEFAULT_WORD_CAP};
pub use scripted::ScriptedChat;
pub use simulated::{SimulatedOracle, SimulatedOracleConfig};
pub use templates::{PromptTemplate, TemplateKind, TemplateSet};
pub use wire::{build_request_body, WireChat, WireConfig, TEMPERATURE};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error: {message} (reply: {raw_reply:?})")]
    Protocol { message: String, raw_reply: String },
    #[error("expected {expected} items in reply, got {actual} (reply: {raw_reply:?})")]
    WrongCount { expected: usize, actual: usize, raw_reply: String },
    #[error("script exhausted after {consumed} replies")]
    ScriptExhausted { consumed: usize },
    #[error("{backend} backend does not support {operation}")]
    Unsupported { backend: BackendKind, operation: &'static str },
    #[error("template: {0}")]
    Template(String),
    #[error("io: {0}")]
    Io(String),
    #[error("embedding: {0}")]
    Embedding(String),
}

impl OracleError {
    /// Transport failures may succeed on a later attempt; nothing else will.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Transport { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Wire,
    Scripted,
    Simulated,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Wire => "wire",
            Self::Scripted => "scripted",
            Self::Simulated => "simulated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Yes,
    No,
}

impl Verdict {
    pub fn is_yes(self) -> bool {
        self == Self::Yes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocAnswer {
    pub verdict: Verdict,
    pub raw_reply: String,
}

/// Attribute-directed questions for the VQA step.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionSet {
    questions: Vec<String>,
}

impl QuestionSet {
    pub fn new(questions: Vec<String>) -> Result<Self, OracleError> {
        if questions.is_empty() {
            return Err(OracleError::Template("question set is empty".into()));
        }
        if let Some(q) = questions.iter().find(|q| !q.trim_end().ends_with('?')) {
            return Err(OracleError::Template(format!("question {q:?} does not end with '?'")));
        }
        Ok(Self { questions })
    }

    pub fn questions(&self) -> &[String] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    /// `1. ...\n2. ...`, the form substituted into `{questions}`.
    pub fn numbered(&self) -> String {
        self.questions
            .iter()
            .enumerate()
            .map(|(i, q)| format!("{}. {q}", i + 1))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl Default for QuestionSet {
    fn default() -> Self {
        Self::new(
            [
                "What is the gender of the person?",
                "What does the person's hair look like?",
                "What is the person wearing on the upper body?",
                "What is the person wearing on the lower body?",
                "What shoes is the person wearing?",
                "What is the person carrying or holding?",
                "What is in the background?",
            ]
            .map(String::from)
            .to_vec(),
        )
        .expect("default questions are valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Refinement {
    Text(String),
    /// Unit-norm query embedding.
    Embedding(Vec<f32>),
}

/// A refined query together with what it cost to produce.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedQuery {
    pub refinement: Refinement,
    pub provenance: BackendKind,
    pub oracle_calls: u32,
}

impl RefinedQuery {
    pub fn text(&self) -> Option<&str> {
        match &self.refinement {
            Refinement::Text(t) => Some(t),
            Refinement::Embedding(_) => None,
        }
    }
}

/// What the engine and the augmentation pipeline need from a multimodal LLM.
pub trait Oracle: Send + Sync {
    fn kind(&self) -> BackendKind;

    /// Anchor localization. `ordinal` is the 0-based call number within the
    /// query's session.
    fn localize(&self, query: &TextRecord, image: &ImageRecord, ordinal: u32) -> Result<LocAnswer, OracleError>;

    /// Human-centered VQA: one reply answering every question in order.
    fn vqa(&self, questions: &QuestionSet, image: &ImageRecord) -> Result<String, OracleError>;

    /// Merges VQA answers into the query text.
    fn aggregate(&self, answers: &str, query: &TextRecord) -> Result<RefinedQuery, OracleError>;

    /// VQA on the anchor followed by aggregation.
    fn refine_query(&self, query: &TextRecord, anchor: &ImageRecord) -> Result<RefinedQuery, OracleError>;

    fn decompose(&self, text: &str) -> Result<Vec<String>, OracleError>;

    /// Exactly `m` restyled variants of `sentence`.
    fn rewrite(&self, sentence: &str, m: usize) -> Result<Vec<String>, OracleError>;

    /// Total model calls issued so far.
    fn calls(&self) -> u64;

    /// Whether calls may be issued from several threads without changing
    /// results.
    fn is_concurrent(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_questions() {
        let q = QuestionSet::default();
        assert_eq!(q.len(), 7);
        assert!(q.numbered().starts_with("1. What is the gender"));
        assert!(QuestionSet::new(vec!["Hair color".into()]).is_err());
        assert!(QuestionSet::new(vec![]).is_err());
    }
}
