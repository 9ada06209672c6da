use std::collections::VecDeque;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use super::{BackendKind, ChatModel, ChatRequest, OracleError};

/// Replays a fixed list of replies strictly in order and records every
/// request it was sent. Single consumer: callers must not share it across
/// concurrently running sessions.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    state: Mutex<ScriptState>,
}

#[derive(Debug, Default)]
struct ScriptState {
    replies: VecDeque<String>,
    consumed: usize,
    requests: Vec<ChatRequest>,
}

impl ScriptedChat {
    pub fn new(replies: Vec<String>) -> Self {
        Self { state: Mutex::new(ScriptState { replies: replies.into(), ..Default::default() }) }
    }

    /// Loads a JSON array of reply strings.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| OracleError::Io(format!("{}: {e}", path.display())))?;
        let replies: Vec<String> =
            serde_json::from_str(&text).map_err(|e| OracleError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self::new(replies))
    }

    pub fn consumed(&self) -> usize {
        self.state.lock().expect("script lock").consumed
    }

    pub fn remaining(&self) -> usize {
        self.state.lock().expect("script lock").replies.len()
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.state.lock().expect("script lock").requests.clone()
    }
}

impl ChatModel for ScriptedChat {
    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, OracleError> {
        let mut state = self.state.lock().expect("script lock");
        state.requests.push(request.clone());
        match state.replies.pop_front() {
            Some(reply) => {
                state.consumed += 1;
                Ok(reply)
            }
            None => Err(OracleError::ScriptExhausted { consumed: state.consumed }),
        }
    }

    fn is_concurrent(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replays_in_order_and_counts() {
        let chat = ScriptedChat::new(vec!["a".into(), "b".into()]);
        let req = ChatRequest { prompt: "p".into(), image: None };
        assert_eq!(chat.complete(&req).unwrap(), "a");
        assert_eq!(chat.complete(&req).unwrap(), "b");
        assert_eq!(chat.complete(&req), Err(OracleError::ScriptExhausted { consumed: 2 }));
        assert_eq!(chat.consumed(), 2);
        assert_eq!(chat.requests().len(), 3);
    }

    #[test]
    fn loads_json_array() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("script.json");
        fs::write(&p, r#"["Yes", "No"]"#).unwrap();
        assert_eq!(ScriptedChat::from_file(&p).unwrap().remaining(), 2);
        fs::write(&p, r#"{"not": "an array"}"#).unwrap();
        assert!(ScriptedChat::from_file(&p).is_err());
    }
}
