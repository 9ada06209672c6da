//! Chat-completions HTTP client.

use std::thread;
use std::time::Duration;

use base64::Engine as _;
use serde_json::{json, Value};

use super::{BackendKind, ChatModel, ChatRequest, OracleError};

/// Sampling temperature sent with every request, for reproducible replies.
pub const TEMPERATURE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct WireConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub timeout: Duration,
}

impl WireConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
            timeout: Duration::from_secs(120),
        }
    }

    fn backoff(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry);
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

fn image_mime(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        "image/png"
    } else {
        "image/jpeg"
    }
}

/// The JSON body for one request.
pub fn build_request_body(model: &str, request: &ChatRequest) -> Value {
    let mut content = vec![json!({"type": "text", "text": request.prompt})];
    if let Some(bytes) = &request.image {
        let data = base64::engine::general_purpose::STANDARD.encode(bytes);
        content.push(json!({
            "type": "image_url",
            "image_url": {"url": format!("data:{};base64,{data}", image_mime(bytes))}
        }));
    }
    json!({
        "model": model,
        "temperature": TEMPERATURE,
        "messages": [{"role": "user", "content": content}],
    })
}

/// Extracts `choices[0].message.content`, accepting either a string or a
/// list of text parts.
fn reply_text(body: &Value) -> Option<String> {
    let content = body.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => Some(parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect()),
        _ => None,
    }
}

/// Blocking chat-completions client with bounded exponential-backoff
/// retries. Safe to share across threads.
pub struct WireChat {
    config: WireConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(OracleError),
}

impl WireChat {
    pub fn new(config: WireConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &WireConfig {
        &self.config
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let mut req = self.agent.post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let msg = format!("HTTP {status}");
            return if status >= 500 || status == 408 || status == 429 {
                Attempt::Retry(msg)
            } else {
                Attempt::Fatal(OracleError::Transport { attempts: 1, message: msg })
            };
        }
        let json: Value = match resp.body_mut().read_json() {
            Ok(v) => v,
            Err(e) => return Attempt::Retry(format!("reading body: {e}")),
        };
        match reply_text(&json) {
            Some(text) => Attempt::Done(text),
            None => Attempt::Fatal(OracleError::Protocol {
                message: "response lacks choices[0].message.content".into(),
                raw_reply: json.to_string(),
            }),
        }
    }
}

impl ChatModel for WireChat {
    fn kind(&self) -> BackendKind {
        BackendKind::Wire
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, OracleError> {
        let body = build_request_body(&self.config.model, request);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(OracleError::Transport { message, .. }) => {
                    return Err(OracleError::Transport { attempts, message })
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(message) => {
                    if attempts > self.config.max_retries {
                        return Err(OracleError::Transport { attempts, message });
                    }
                    log::debug!("chat request failed ({message}), retry {attempts}");
                    thread::sleep(self.config.backoff(attempts - 1));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_carries_fixed_temperature() {
        let body = build_request_body("m", &ChatRequest { prompt: "hi".into(), image: None });
        assert_eq!(body["temperature"], json!(0.01));
        assert_eq!(body["model"], "m");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"].as_array().unwrap().len(), 1);
        assert!(body.to_string().contains("\"temperature\":0.01"));
    }

    #[test]
    fn image_becomes_data_url_part() {
        let body = build_request_body("m", &ChatRequest { prompt: "p".into(), image: Some(vec![0xFF, 0xD8, 0xFF, 0xE0]) });
        let part = &body["messages"][0]["content"][1];
        assert_eq!(part["type"], "image_url");
        assert_eq!(part["image_url"]["url"], "data:image/jpeg;base64,/9j/4A==");
    }

    #[test]
    fn reply_extraction() {
        assert_eq!(reply_text(&json!({"choices": [{"message": {"content": "Yes"}}]})).as_deref(), Some("Yes"));
        assert_eq!(
            reply_text(&json!({"choices": [{"message": {"content": [{"type": "text", "text": "No"}]}}]})).as_deref(),
            Some("No")
        );
        assert_eq!(reply_text(&json!({"choices": []})), None);
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let mut c = WireConfig::new("http://x", "m");
        c.initial_backoff = Duration::from_millis(100);
        c.max_backoff = Duration::from_millis(300);
        assert_eq!(c.backoff(0), Duration::from_millis(100));
        assert_eq!(c.backoff(1), Duration::from_millis(200));
        assert_eq!(c.backoff(2), Duration::from_millis(300));
    }
}
