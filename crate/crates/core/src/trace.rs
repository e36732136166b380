//! Per-question trace files (JSONL).
//!
//! Line kinds, in order: one `header`, then `tool_call` and `turn` records as
//! they happen, then one terminal `summary`.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controllers::{ControllerConfig, EvidenceItem, Termination};
use crate::error::{Error, Result};
use crate::tools::ToolCall;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub controller: String,
    pub qid: Option<String>,
    pub question: String,
    pub config: ControllerConfig,
    pub prompt_version: Option<String>,
}

/// One controller decision step of the LLM loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: u32,
    pub proposed: usize,
    pub executed: usize,
    pub dropped: Vec<String>,
    pub duplicates: usize,
    pub fallback: bool,
    pub final_text: Option<String>,
    pub error: Option<String>,
    pub collected: usize,
    pub stalled: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub seeds: Vec<String>,
    pub explored: Vec<String>,
    pub collected: Vec<(String, String)>,
    pub turns: u32,
    pub tool_calls: usize,
    pub token_estimate: u64,
    pub gateway_tokens: u64,
    pub gateway_calls: u32,
    pub wall_ms: u64,
    pub termination: Option<Termination>,
    pub evidence: Vec<EvidenceItem>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    Header(TraceHeader),
    ToolCall(ToolCall),
    Turn(TurnRecord),
    Summary(TraceSummary),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, e: TraceEvent) {
        self.events.push(e);
    }

    pub fn header(&self) -> Option<&TraceHeader> {
        self.events.iter().find_map(|e| match e {
            TraceEvent::Header(h) => Some(h),
            _ => None,
        })
    }

    pub fn tool_calls(&self) -> impl Iterator<Item = &ToolCall> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::ToolCall(c) => Some(c),
            _ => None,
        })
    }

    pub fn turns(&self) -> impl Iterator<Item = &TurnRecord> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Turn(t) => Some(t),
            _ => None,
        })
    }

    pub fn summary(&self) -> Option<&TraceSummary> {
        self.events.iter().rev().find_map(|e| match e {
            TraceEvent::Summary(s) => Some(s),
            _ => None,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut events = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Trace { events })
    }
}
