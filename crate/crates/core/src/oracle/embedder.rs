//! Embedding of text-valued refined queries, which the engine needs to score
//! the gallery against a refinement produced by an LLM.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::OracleError;
use crate::corpus::{normalize_in_place, TextRecord};

pub trait QueryEmbedder: Send + Sync {
    /// Unit-norm embedding for `refined_text`, the refinement of `query`.
    fn embed(&self, query: &TextRecord, refined_text: &str) -> Result<Vec<f32>, OracleError>;
}

fn unit(mut v: Vec<f32>) -> Result<Vec<f32>, OracleError> {
    if normalize_in_place(&mut v) {
        Ok(v)
    } else {
        Err(OracleError::Embedding("zero-norm embedding".into()))
    }
}

/// Text-embedding service: POST `{"input": text, "model": ...}`, reply either
/// `{"embedding": [...]}` or `{"data": [{"embedding": [...]}]}`.
pub struct HttpEmbedder {
    endpoint: String,
    model: Option<String>,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, model: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { endpoint: endpoint.into(), model, agent }
    }
}

fn extract_embedding(body: &Value) -> Option<Vec<f32>> {
    let arr = body
        .get("embedding")
        .or_else(|| body.get("data")?.get(0)?.get("embedding"))?
        .as_array()?;
    arr.iter().map(|x| x.as_f64().map(|f| f as f32)).collect()
}

impl QueryEmbedder for HttpEmbedder {
    fn embed(&self, _query: &TextRecord, refined_text: &str) -> Result<Vec<f32>, OracleError> {
        let mut body = json!({"input": refined_text});
        if let Some(model) = &self.model {
            body["model"] = json!(model);
        }
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(&body)
            .map_err(|e| OracleError::Transport { attempts: 1, message: e.to_string() })?;
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| OracleError::Transport { attempts: 1, message: e.to_string() })?;
        let v = extract_embedding(&value).ok_or_else(|| OracleError::Protocol {
            message: "embedding response lacks an embedding array".into(),
            raw_reply: value.to_string(),
        })?;
        unit(v)
    }
}

#[derive(Deserialize)]
struct TableRow {
    text_id: String,
    embedding: Vec<f32>,
}

/// Refined-query embeddings computed offline, keyed by text id. JSON Lines,
/// one `{"text_id": str, "embedding": [f32]}` per line.
#[derive(Debug, Clone, Default)]
pub struct RefinedEmbeddingTable {
    rows: HashMap<String, Vec<f32>>,
}

impl RefinedEmbeddingTable {
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, OracleError> {
        let mut rows = HashMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| OracleError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: TableRow =
                serde_json::from_str(&line).map_err(|e| OracleError::Io(format!("line {}: {e}", n + 1)))?;
            rows.insert(row.text_id, unit(row.embedding)?);
        }
        Ok(Self { rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| OracleError::Io(format!("{}: {e}", path.display())))?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn insert(&mut self, text_id: impl Into<String>, embedding: Vec<f32>) -> Result<(), OracleError> {
        self.rows.insert(text_id.into(), unit(embedding)?);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl QueryEmbedder for RefinedEmbeddingTable {
    fn embed(&self, query: &TextRecord, _refined_text: &str) -> Result<Vec<f32>, OracleError> {
        self.rows
            .get(&query.text_id)
            .cloned()
            .ok_or_else(|| OracleError::Embedding(format!("no refined embedding for {}", query.text_id)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PersonId;

    #[test]
    fn table_lookup_by_text_id() {
        let input = "{\"text_id\": \"a#0\", \"embedding\": [3.0, 4.0]}\n\n{\"text_id\": \"b#0\", \"embedding\": [1.0, 0.0]}\n";
        let table = RefinedEmbeddingTable::from_reader(input.as_bytes()).unwrap();
        assert_eq!(table.len(), 2);
        let q = TextRecord { text_id: "a#0".into(), person_id: PersonId(0), raw_text: "x".into(), embedding_index: 0, image_id: "a".into() };
        let v = table.embed(&q, "ignored").unwrap();
        assert!((v[0] - 0.6).abs() < 1e-6 && (v[1] - 0.8).abs() < 1e-6);
        let missing = TextRecord { text_id: "zzz".into(), ..q };
        assert!(table.embed(&missing, "").is_err());
    }

    #[test]
    fn embedding_response_shapes() {
        assert_eq!(extract_embedding(&json!({"embedding": [1.0, 2.0]})), Some(vec![1.0, 2.0]));
        assert_eq!(extract_embedding(&json!({"data": [{"embedding": [0.5]}]})), Some(vec![0.5]));
        assert_eq!(extract_embedding(&json!({"data": []})), None);
    }
}
