//! The nine navigator tools, per-question exploration state, and the call log.

use std::time::Instant;

use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::entity::{entity_search, EntityType, SeedEntity};
use crate::gateway::Gateway;
use crate::graph::{MentionGraph, Neighbor};
use crate::vector::{fnv1a64, Embedder, Hit, VectorIndex};

pub const PREVIEW_CHARS: usize = 200;

pub const TOOL_NAMES: [&str; 9] = [
    "entity_search",
    "get_chunks_for_entity",
    "vector_search",
    "expand_neighbors",
    "read_chunk",
    "sub_query",
    "summarize_chunks",
    "collect_chunk",
    "rerank_evidence",
];

/// A validated tool invocation. On the wire: `{"tool": "<name>", "args": {...}}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "tool", content = "args", rename_all = "snake_case")]
pub enum ToolAction {
    EntitySearch { query: String },
    GetChunksForEntity { uri: String },
    VectorSearch { query: String, k: usize },
    ExpandNeighbors { uri: String },
    ReadChunk { chunk_id: String },
    SubQuery { question: String, chunk_ids: Vec<String> },
    SummarizeChunks { chunk_ids: Vec<String>, focus: String },
    CollectChunk { chunk_id: String, relevance: String },
    RerankEvidence { question: String },
}

impl ToolAction {
    pub fn name(&self) -> &'static str {
        match self {
            ToolAction::EntitySearch { .. } => "entity_search",
            ToolAction::GetChunksForEntity { .. } => "get_chunks_for_entity",
            ToolAction::VectorSearch { .. } => "vector_search",
            ToolAction::ExpandNeighbors { .. } => "expand_neighbors",
            ToolAction::ReadChunk { .. } => "read_chunk",
            ToolAction::SubQuery { .. } => "sub_query",
            ToolAction::SummarizeChunks { .. } => "summarize_chunks",
            ToolAction::CollectChunk { .. } => "collect_chunk",
            ToolAction::RerankEvidence { .. } => "rerank_evidence",
        }
    }

    pub fn args(&self) -> Value {
        serde_json::to_value(self)
            .ok()
            .and_then(|mut v| v.get_mut("args").map(Value::take))
            .unwrap_or(Value::Null)
    }

    /// Parse one wire action, rejecting unknown tools and malformed arguments.
    pub fn from_wire(v: &Value) -> Result<Self, String> {
        let tool = v
            .get("tool")
            .and_then(Value::as_str)
            .ok_or_else(|| format!("action without tool name: {v}"))?;
        if !TOOL_NAMES.contains(&tool) {
            return Err(format!("unknown tool {tool:?}"));
        }
        let action: ToolAction =
            serde_json::from_value(v.clone()).map_err(|e| format!("malformed arguments for {tool}: {e}"))?;
        if let ToolAction::VectorSearch { k: 0, .. } = action {
            return Err("vector_search requires k >= 1".into());
        }
        Ok(action)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: &'static str,
    pub description: &'static str,
    pub parameters: Value,
}

pub fn tool_schemas() -> Vec<ToolSchema> {
    let s = |props: Value, required: &[&str]| json!({"type": "object", "properties": props, "required": required});
    let string = json!({"type": "string"});
    let strings = json!({"type": "array", "items": {"type": "string"}});
    vec![
        ToolSchema {
            name: "entity_search",
            description: "NER + fuzzy-match entity search; returns (entity_uri, label, chunk_count)",
            parameters: s(json!({"query": string}), &["query"]),
        },
        ToolSchema {
            name: "get_chunks_for_entity",
            description: "Return chunks mentioning an entity as (chunk_id, text_preview)",
            parameters: s(json!({"uri": string}), &["uri"]),
        },
        ToolSchema {
            name: "vector_search",
            description: "Semantic similarity search over chunks",
            parameters: s(
                json!({"query": string, "k": {"type": "integer", "minimum": 1}}),
                &["query", "k"],
            ),
        },
        ToolSchema {
            name: "expand_neighbors",
            description: "Find co-mentioned entities via shared chunks",
            parameters: s(json!({"uri": string}), &["uri"]),
        },
        ToolSchema {
            name: "read_chunk",
            description: "Read full text and entity list of a chunk",
            parameters: s(json!({"chunk_id": string}), &["chunk_id"]),
        },
        ToolSchema {
            name: "sub_query",
            description: "Ask a focused sub-question over a subset of chunks",
            parameters: s(
                json!({"question": string, "chunk_ids": strings}),
                &["question", "chunk_ids"],
            ),
        },
        ToolSchema {
            name: "summarize_chunks",
            description: "Compress gathered evidence with a focus",
            parameters: s(json!({"chunk_ids": strings, "focus": string}), &["chunk_ids", "focus"]),
        },
        ToolSchema {
            name: "collect_chunk",
            description: "Mark a chunk as relevant evidence",
            parameters: s(
                json!({"chunk_id": string, "relevance": string}),
                &["chunk_id", "relevance"],
            ),
        },
        ToolSchema {
            name: "rerank_evidence",
            description: "Re-rank collected chunks by vector similarity",
            parameters: s(json!({"question": string}), &["question"]),
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkPreview {
    pub chunk_id: String,
    pub text_preview: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorHit {
    pub chunk_id: String,
    pub similarity: f64,
    pub text_preview: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRef {
    pub entity_uri: String,
    pub label: String,
    pub etype: EntityType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolOutput {
    Entities(Vec<SeedEntity>),
    Chunks(Vec<ChunkPreview>),
    Hits(Vec<VectorHit>),
    Neighbors(Vec<Neighbor>),
    Chunk {
        chunk_id: String,
        text: String,
        entities: Vec<EntityRef>,
        doc_id: String,
        title: String,
    },
    Collected {
        chunk_id: String,
        collected_count: usize,
    },
    Reranked(Vec<Hit>),
    Text(String),
    Error(String),
}

impl ToolOutput {
    pub fn is_error(&self) -> bool {
        matches!(self, ToolOutput::Error(_))
    }
}

/// One executed tool call as it appears in the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub turn: u32,
    pub tool: String,
    pub args: Value,
    pub result: Value,
    pub result_digest: String,
    pub token_estimate: u64,
    pub wall_ms: u64,
}

/// Per-question controller state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplorationState {
    pub explored_entities: IndexSet<String>,
    pub collected: IndexMap<String, String>,
    pub frontier: IndexSet<String>,
    pub stall_counter: u32,
    pub turn: u32,
    pub tool_calls: Vec<ToolCall>,
}

impl ExplorationState {
    pub fn token_estimate(&self) -> u64 {
        self.tool_calls.iter().map(|c| c.token_estimate).sum()
    }

    fn add_to_frontier(&mut self, uri: &str) {
        if !self.explored_entities.contains(uri) {
            self.frontier.insert(uri.to_string());
        }
    }

    /// Status block injected into every controller turn.
    pub fn summary(&self, graph: &MentionGraph) -> String {
        let label = |uri: &String| {
            graph
                .entity(uri)
                .map(|e| format!("{} <{}>", e.label, uri))
                .unwrap_or_else(|| uri.clone())
        };
        let mut out = format!("Chunks collected ({}):", self.collected.len());
        for (id, note) in &self.collected {
            out.push_str(&format!("\n- {id}: {note}"));
        }
        out.push_str(&format!("\nEntities explored ({}):", self.explored_entities.len()));
        for uri in &self.explored_entities {
            out.push_str(&format!("\n- {}", label(uri)));
        }
        out.push_str(&format!("\nFrontier, not yet explored ({}):", self.frontier.len()));
        for uri in &self.frontier {
            out.push_str(&format!("\n- {}", label(uri)));
        }
        out
    }
}

/// Wall-clock source for trace timings. `Frozen` records zeros so traces
/// and reports are byte-reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    #[default]
    Wall,
    Frozen,
}

pub struct Stopwatch(Option<Instant>);

impl Clock {
    pub fn start(self) -> Stopwatch {
        match self {
            Clock::Wall => Stopwatch(Some(Instant::now())),
            Clock::Frozen => Stopwatch(None),
        }
    }
}

impl Stopwatch {
    pub fn elapsed_ms(&self) -> u64 {
        self.0.map_or(0, |t| t.elapsed().as_millis() as u64)
    }
}

/// `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

pub fn preview(text: &str) -> String {
    text.chars().take(PREVIEW_CHARS).collect()
}

/// Shared read-only resources the tools run against.
#[derive(Clone, Copy)]
pub struct ToolContext<'a> {
    pub graph: &'a MentionGraph,
    pub index: &'a VectorIndex,
    pub embedder: &'a dyn Embedder,
    pub gateway: Option<&'a dyn Gateway>,
    pub n_seed: usize,
    pub clock: Clock,
}

/// Executes tools against a context and one question's state, logging every call.
pub struct ToolRuntime<'a> {
    ctx: ToolContext<'a>,
    pub state: ExplorationState,
}

impl<'a> ToolRuntime<'a> {
    pub fn new(ctx: ToolContext<'a>) -> Self {
        Self {
            ctx,
            state: ExplorationState::default(),
        }
    }

    pub fn context(&self) -> ToolContext<'a> {
        self.ctx
    }

    pub fn execute(&mut self, action: &ToolAction) -> ToolOutput {
        let watch = self.ctx.clock.start();
        let out = self.dispatch(action);
        let args = action.args();
        let result = serde_json::to_value(&out).unwrap_or(Value::Null);
        let args_s = args.to_string();
        let result_s = result.to_string();
        self.state.tool_calls.push(ToolCall {
            turn: self.state.turn,
            tool: action.name().to_string(),
            token_estimate: estimate_tokens(&format!("{args_s}{result_s}")),
            result_digest: format!("{:016x}", fnv1a64(result_s.as_bytes())),
            args,
            result,
            wall_ms: watch.elapsed_ms(),
        });
        out
    }

    fn dispatch(&mut self, action: &ToolAction) -> ToolOutput {
        match action {
            ToolAction::EntitySearch { query } => self.entity_search(query),
            ToolAction::GetChunksForEntity { uri } => self.get_chunks_for_entity(uri),
            ToolAction::VectorSearch { query, k } => self.vector_search(query, *k),
            ToolAction::ExpandNeighbors { uri } => self.expand_neighbors(uri),
            ToolAction::ReadChunk { chunk_id } => self.read_chunk(chunk_id),
            ToolAction::SubQuery { question, chunk_ids } => self.sub_query(question, chunk_ids),
            ToolAction::SummarizeChunks { chunk_ids, focus } => self.summarize_chunks(chunk_ids, focus),
            ToolAction::CollectChunk { chunk_id, relevance } => self.collect_chunk(chunk_id, relevance),
            ToolAction::RerankEvidence { question } => self.rerank_evidence(question),
        }
    }

    fn entity_search(&mut self, query: &str) -> ToolOutput {
        let seeds = entity_search(query, self.ctx.graph, self.ctx.n_seed);
        for s in &seeds {
            self.state.add_to_frontier(&s.entity_uri);
        }
        ToolOutput::Entities(seeds)
    }

    fn get_chunks_for_entity(&mut self, uri: &str) -> ToolOutput {
        let graph = self.ctx.graph;
        match graph.chunks_for_entity(uri) {
            Ok(ids) => {
                self.state.frontier.shift_remove(uri);
                self.state.explored_entities.insert(uri.to_string());
                ToolOutput::Chunks(
                    ids.into_iter()
                        .map(|id| ChunkPreview {
                            chunk_id: id.to_string(),
                            text_preview: graph.chunk(id).map(|c| preview(&c.text)).unwrap_or_default(),
                        })
                        .collect(),
                )
            }
            Err(e) => ToolOutput::Error(e.to_string()),
        }
    }

    fn vector_search(&mut self, query: &str, k: usize) -> ToolOutput {
        let hits = self
            .ctx
            .embedder
            .embed(query)
            .and_then(|q| self.ctx.index.search_top_k(&q, k));
        match hits {
            Ok(hits) => ToolOutput::Hits(
                hits.into_iter()
                    .map(|h| VectorHit {
                        text_preview: self
                            .ctx
                            .graph
                            .chunk(&h.chunk_id)
                            .map(|c| preview(&c.text))
                            .unwrap_or_default(),
                        chunk_id: h.chunk_id,
                        similarity: h.similarity,
                    })
                    .collect(),
            ),
            Err(e) => ToolOutput::Error(e.to_string()),
        }
    }

    fn expand_neighbors(&mut self, uri: &str) -> ToolOutput {
        match self.ctx.graph.co_mention_neighbors(uri) {
            Ok(ns) => {
                for n in &ns {
                    self.state.add_to_frontier(&n.neighbor_uri);
                }
                ToolOutput::Neighbors(ns)
            }
            Err(e) => ToolOutput::Error(e.to_string()),
        }
    }

    fn read_chunk(&mut self, chunk_id: &str) -> ToolOutput {
        let graph = self.ctx.graph;
        let Some(chunk) = graph.chunk(chunk_id) else {
            return ToolOutput::Error(format!("not found: chunk {chunk_id}"));
        };
        let entities = graph
            .entities_for_chunk(chunk_id)
            .unwrap_or_default()
            .into_iter()
            .map(|e| EntityRef {
                entity_uri: e.entity_uri.clone(),
                label: e.label.clone(),
                etype: e.etype,
            })
            .collect();
        ToolOutput::Chunk {
            chunk_id: chunk.chunk_id.clone(),
            text: chunk.text.clone(),
            entities,
            doc_id: chunk.doc_id.clone(),
            title: graph
                .document(&chunk.doc_id)
                .map(|d| d.title.clone())
                .unwrap_or_default(),
        }
    }

    fn chunk_texts(&self, chunk_ids: &[String]) -> Result<String, String> {
        if chunk_ids.is_empty() {
            return Err("chunk_ids must not be empty".into());
        }
        let mut out = String::new();
        for id in chunk_ids {
            let c = self
                .ctx
                .graph
                .chunk(id)
                .ok_or_else(|| format!("not found: chunk {id}"))?;
            out.push_str(&format!("[{}]\n{}\n\n", c.chunk_id, c.text));
        }
        Ok(out)
    }

    fn oneshot(&self, prompt: String) -> ToolOutput {
        match self.ctx.gateway {
            None => ToolOutput::Error("no LLM gateway configured".into()),
            Some(g) => match g.oneshot(&prompt) {
                Ok(text) => ToolOutput::Text(text),
                Err(e) => ToolOutput::Error(e.to_string()),
            },
        }
    }

    fn sub_query(&mut self, question: &str, chunk_ids: &[String]) -> ToolOutput {
        match self.chunk_texts(chunk_ids) {
            Ok(passages) => self.oneshot(sub_query_prompt(question, &passages)),
            Err(e) => ToolOutput::Error(e),
        }
    }

    fn summarize_chunks(&mut self, chunk_ids: &[String], focus: &str) -> ToolOutput {
        match self.chunk_texts(chunk_ids) {
            Ok(passages) => self.oneshot(summarize_prompt(focus, &passages)),
            Err(e) => ToolOutput::Error(e),
        }
    }

    fn collect_chunk(&mut self, chunk_id: &str, relevance: &str) -> ToolOutput {
        if self.ctx.graph.chunk(chunk_id).is_none() {
            return ToolOutput::Error(format!("not found: chunk {chunk_id}"));
        }
        self.state.collected.insert(chunk_id.to_string(), relevance.to_string());
        ToolOutput::Collected {
            chunk_id: chunk_id.to_string(),
            collected_count: self.state.collected.len(),
        }
    }

    fn rerank_evidence(&mut self, question: &str) -> ToolOutput {
        let q = match self.ctx.embedder.embed(question) {
            Ok(q) => q,
            Err(e) => return ToolOutput::Error(e.to_string()),
        };
        let mut hits = Vec::with_capacity(self.state.collected.len());
        for id in self.state.collected.keys() {
            match self.ctx.index.similarity(&q, id) {
                Ok(s) => hits.push(Hit {
                    chunk_id: id.clone(),
                    similarity: s,
                }),
                Err(e) => return ToolOutput::Error(e.to_string()),
            }
        }
        hits.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then_with(|| a.chunk_id.cmp(&b.chunk_id))
        });
        ToolOutput::Reranked(hits)
    }
}

pub fn sub_query_prompt(question: &str, passages: &str) -> String {
    format!(
        "Answer the question using only the passages below. Be brief.\n\nQuestion: {question}\n\nPassages:\n{passages}"
    )
}

pub fn summarize_prompt(focus: &str, passages: &str) -> String {
    format!(
        "Summarize the passages below, keeping only what bears on the focus.\n\nFocus: {focus}\n\nPassages:\n{passages}"
    )
}
