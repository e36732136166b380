//! Provider-agnostic tool-calling boundary.
//!
//! Wire format (both the scripted replay files and the HTTP adapter use it):
//!
//! ```text
//! request   {"system", "question", "state_summary", "history", "tools", "turn", "options"}
//! response  {"actions": [{"tool": "<name>", "args": {...}}, ...]}  or  {"final": "<text>"}
//! oneshot   {"mode": "oneshot", "prompt", "options"}  ->  {"final": "<text>"}
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::error::Error;
use crate::tools::{ToolAction, ToolSchema};
use crate::vector::fnv1a64;

const SYSTEM_PROMPT: &str = include_str!("../resources/system_prompt.txt");

/// The navigator instructions shipped with the crate. First line is the
/// version tag.
pub fn default_system_prompt() -> &'static str {
    SYSTEM_PROMPT
}

pub fn system_prompt_version() -> &'static str {
    SYSTEM_PROMPT
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("version: "))
        .unwrap_or("unversioned")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    /// Network trouble or a 5xx; the turn fails but the loop goes on.
    #[error("transport: {0}")]
    Transport(String),
    /// Anything the loop cannot recover from.
    #[error("{0}")]
    Fatal(String),
}

impl GatewayError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, GatewayError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub turn: u32,
    pub tool: String,
    pub args: Value,
    pub result: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct TurnRequest {
    #[serde(rename = "system")]
    pub system_prompt: String,
    pub question: String,
    pub state_summary: String,
    pub history: Vec<HistoryEntry>,
    #[serde(rename = "tools")]
    pub tool_schemas: Vec<ToolSchema>,
    pub turn: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TurnResponse {
    /// Validated actions. `dropped` describes proposals that failed validation;
    /// `actions` may be empty when nothing usable came back.
    Actions {
        actions: Vec<ToolAction>,
        dropped: Vec<String>,
    },
    Final(String),
}

impl TurnResponse {
    pub fn from_wire(v: &Value) -> Self {
        if let Some(text) = v.get("final").and_then(Value::as_str) {
            return TurnResponse::Final(text.to_string());
        }
        let Some(raw) = v.get("actions").and_then(Value::as_array) else {
            return TurnResponse::Actions {
                actions: Vec::new(),
                dropped: vec![format!("malformed response: {v}")],
            };
        };
        let mut actions = Vec::new();
        let mut dropped = Vec::new();
        for a in raw {
            match ToolAction::from_wire(a) {
                Ok(a) => actions.push(a),
                Err(e) => dropped.push(e),
            }
        }
        TurnResponse::Actions { actions, dropped }
    }

    pub fn to_wire(&self) -> Value {
        match self {
            TurnResponse::Final(t) => json!({ "final": t }),
            TurnResponse::Actions { actions, .. } => json!({ "actions": actions }),
        }
    }
}

pub trait Gateway: Send + Sync {
    fn turn(&self, req: &TurnRequest) -> Result<TurnResponse, GatewayError>;

    /// Single completion without tools.
    fn oneshot(&self, prompt: &str) -> Result<String, GatewayError>;
}

/// Key used by scripts to address one-shot prompts: FNV-1a 64 of the UTF-8
/// prompt, 16 lowercase hex digits.
pub fn prompt_digest(prompt: &str) -> String {
    format!("{:016x}", fnv1a64(prompt.as_bytes()))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptTurns {
    #[serde(default)]
    turns: BTreeMap<u32, Value>,
    #[serde(default)]
    default_turn: Option<Value>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    #[serde(default)]
    turns: BTreeMap<u32, Value>,
    #[serde(default)]
    default_turn: Option<Value>,
    #[serde(default)]
    questions: BTreeMap<String, ScriptTurns>,
    #[serde(default)]
    oneshot: BTreeMap<String, String>,
}

/// Replays canned responses by turn number (1-based). A question-specific
/// section, keyed by exact question text, takes precedence over the top-level
/// turns. One-shot replies are keyed by [`prompt_digest`].
///
/// ```json
/// {"turns": {"1": {"actions": [{"tool": "vector_search", "args": {"query": "x", "k": 5}}]},
///            "2": {"final": "done"}},
///  "default_turn": {"final": "done"},
///  "questions": {"Who is Gatsby?": {"turns": {}}},
///  "oneshot": {"<digest>": "yes"}}
/// ```
#[derive(Debug, Clone, Default)]
pub struct ScriptedGateway {
    script: ScriptFile,
}

impl ScriptedGateway {
    pub fn from_value(v: Value) -> Result<Self, Error> {
        Ok(Self {
            script: serde_json::from_value(v)?,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let script = serde_json::from_str(&raw).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Ok(Self { script })
    }

    pub fn with_turn(mut self, turn: u32, response: Value) -> Self {
        self.script.turns.insert(turn, response);
        self
    }

    pub fn with_default_turn(mut self, response: Value) -> Self {
        self.script.default_turn = Some(response);
        self
    }

    pub fn with_oneshot(mut self, prompt: &str, reply: &str) -> Self {
        self.script.oneshot.insert(prompt_digest(prompt), reply.to_string());
        self
    }
}

impl Gateway for ScriptedGateway {
    fn turn(&self, req: &TurnRequest) -> Result<TurnResponse, GatewayError> {
        let (turns, default) = match self.script.questions.get(&req.question) {
            Some(q) => (&q.turns, q.default_turn.as_ref()),
            None => (&self.script.turns, self.script.default_turn.as_ref()),
        };
        turns
            .get(&req.turn)
            .or(default)
            .map(TurnResponse::from_wire)
            .ok_or_else(|| GatewayError::Fatal(format!("script has no response for turn {}", req.turn)))
    }

    fn oneshot(&self, prompt: &str) -> Result<String, GatewayError> {
        let digest = prompt_digest(prompt);
        self.script
            .oneshot
            .get(&digest)
            .cloned()
            .ok_or_else(|| GatewayError::Fatal(format!("script has no one-shot reply for digest {digest}")))
    }
}

/// Generic JSON-over-HTTP adapter for the wire format above.
pub struct HttpGateway {
    url: String,
    api_key: Option<String>,
    options: Value,
    client: reqwest::blocking::Client,
}

impl HttpGateway {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Result<Self, Error> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Gateway(GatewayError::Fatal(e.to_string())))?;
        Ok(Self {
            url: url.into(),
            api_key,
            options: json!({ "temperature": 0.0 }),
            client,
        })
    }

    /// Opaque decoding options forwarded with every request.
    pub fn with_options(mut self, options: Value) -> Self {
        self.options = options;
        self
    }

    /// Built from `LLM_URL` and, if set, `LLM_API_KEY`.
    pub fn from_env() -> Result<Self, Error> {
        let url = std::env::var("LLM_URL").map_err(|_| Error::Usage("LLM_URL is not set".into()))?;
        Self::new(url, std::env::var("LLM_API_KEY").ok(), Duration::from_secs(120))
    }

    fn post(&self, body: &Value) -> Result<Value, GatewayError> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(GatewayError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(GatewayError::Fatal(format!("HTTP {status}")));
        }
        let text = resp.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }
}

impl Gateway for HttpGateway {
    fn turn(&self, req: &TurnRequest) -> Result<TurnResponse, GatewayError> {
        let mut body = serde_json::to_value(req).map_err(|e| GatewayError::Fatal(e.to_string()))?;
        body["options"] = self.options.clone();
        Ok(TurnResponse::from_wire(&self.post(&body)?))
    }

    fn oneshot(&self, prompt: &str) -> Result<String, GatewayError> {
        let v = self.post(&json!({"mode": "oneshot", "prompt": prompt, "options": self.options}))?;
        v.get("final")
            .or_else(|| v.get("text"))
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Fatal(format!("malformed one-shot response: {v}")))
    }
}
