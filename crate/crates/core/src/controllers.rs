//! The four retrieval controllers and the shared final scoring stage.
//!
//! Every controller maps a question to at most `k` chunk ids with scores in
//! `[0, 1]`, sorted by score descending with ties broken by chunk id.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuzzy::normalize_label;
use crate::gateway::{default_system_prompt, system_prompt_version, Gateway, HistoryEntry, TurnRequest, TurnResponse};
use crate::tools::{estimate_tokens, tool_schemas, ToolAction, ToolContext, ToolOutput, ToolRuntime};
use crate::trace::{Trace, TraceEvent, TraceHeader, TraceSummary, TurnRecord};
use crate::vector::Embedding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Evidence budget shared by all controllers.
    pub k: usize,
    /// GraphRAG-local vector seeds.
    pub seed_k: usize,
    /// GraphRAG-local entities expanded.
    pub expand_entities: usize,
    /// GraphRAG-local chunks taken per expanded entity.
    pub per_entity_chunk_cap: usize,
    /// Heuristic maximum BFS depth.
    pub bfs_depth: usize,
    /// LLM loop turn budget.
    pub max_turns: u32,
    pub stall_break_heuristic: u32,
    pub stall_break_llm: u32,
    /// Added to the similarity of explicitly collected chunks.
    pub boost: f64,
    /// Multiplier on backfilled similarities.
    pub backfill_discount: f64,
    pub n_seed: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            k: 20,
            seed_k: 8,
            expand_entities: 12,
            per_entity_chunk_cap: 12,
            bfs_depth: 3,
            max_turns: 25,
            stall_break_heuristic: 2,
            stall_break_llm: 4,
            boost: 0.10,
            backfill_discount: 0.9,
            n_seed: 10,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k", self.k),
            ("seed_k", self.seed_k),
            ("expand_entities", self.expand_entities),
            ("per_entity_chunk_cap", self.per_entity_chunk_cap),
            ("bfs_depth", self.bfs_depth),
            ("max_turns", self.max_turns as usize),
            ("stall_break_heuristic", self.stall_break_heuristic as usize),
            ("stall_break_llm", self.stall_break_llm as usize),
            ("n_seed", self.n_seed),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.boost) {
            return Err(Error::Validation("boost must lie in [0, 1)".into()));
        }
        if !(self.backfill_discount > 0.0 && self.backfill_discount <= 1.0) {
            return Err(Error::Validation("backfill_discount must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControllerKind {
    #[serde(rename = "vector")]
    VectorOnly,
    #[serde(rename = "graphrag-local")]
    GraphragLocal,
    #[serde(rename = "heuristic")]
    HeuristicRlm,
    #[serde(rename = "llm")]
    LlmRlm,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::VectorOnly,
        ControllerKind::GraphragLocal,
        ControllerKind::HeuristicRlm,
        ControllerKind::LlmRlm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::VectorOnly => "vector",
            ControllerKind::GraphragLocal => "graphrag-local",
            ControllerKind::HeuristicRlm => "heuristic",
            ControllerKind::LlmRlm => "llm",
        }
    }

    pub fn needs_gateway(self) -> bool {
        self == ControllerKind::LlmRlm
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vector" | "vector-only" => Ok(ControllerKind::VectorOnly),
            "graphrag-local" | "graphrag" => Ok(ControllerKind::GraphragLocal),
            "heuristic" | "heuristic-rlm" => Ok(ControllerKind::HeuristicRlm),
            "llm" | "llm-rlm" => Ok(ControllerKind::LlmRlm),
            other => Err(Error::Usage(format!(
                "unknown controller {other:?} (expected vector, graphrag-local, heuristic or llm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceSource {
    Explored,
    Backfill,
    Seed,
    Expansion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub chunk_id: String,
    pub score: f64,
    pub source: EvidenceSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceList {
    pub controller: String,
    pub items: Vec<EvidenceItem>,
    /// Sum of the tool-call log estimates.
    pub token_estimate: u64,
    /// Tokens sent to and received from the LLM gateway.
    pub gateway_tokens: u64,
    pub gateway_calls: u32,
    pub wall_ms: u64,
    pub error: Option<String>,
}

impl EvidenceList {
    pub fn chunk_ids(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.chunk_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FinalText,
    Stalled,
    Budget,
    GatewayError,
    FrontierEmpty,
    BudgetFilled,
}

#[derive(Debug, Clone)]
pub struct ControllerRun {
    pub evidence: EvidenceList,
    pub trace: Trace,
}

fn sort_items(items: &mut [EvidenceItem]) {
    items.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.chunk_id.cmp(&b.chunk_id)));
}

fn header(kind: ControllerKind, qid: Option<&str>, question: &str, cfg: &ControllerConfig) -> TraceEvent {
    TraceEvent::Header(TraceHeader {
        controller: kind.to_string(),
        qid: qid.map(str::to_string),
        question: question.to_string(),
        config: cfg.clone(),
        prompt_version: kind.needs_gateway().then(|| system_prompt_version().to_string()),
    })
}

fn finish(
    kind: ControllerKind,
    items: Vec<EvidenceItem>,
    mut trace: Trace,
    rt: Option<&ToolRuntime<'_>>,
    extra: Extra,
) -> ControllerRun {
    let (explored, collected, calls, tokens, turns) = match rt {
        Some(rt) => (
            rt.state.explored_entities.iter().cloned().collect(),
            rt.state.collected.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            rt.state.tool_calls.len(),
            rt.state.token_estimate(),
            rt.state.turn,
        ),
        None => (Vec::new(), Vec::new(), 0, 0, 0),
    };
    let evidence = EvidenceList {
        controller: kind.to_string(),
        items,
        token_estimate: tokens,
        gateway_tokens: extra.gateway_tokens,
        gateway_calls: extra.gateway_calls,
        wall_ms: extra.wall_ms,
        error: extra.error.clone(),
    };
    trace.push(TraceEvent::Summary(TraceSummary {
        seeds: extra.seeds,
        explored,
        collected: extra.collected_override.unwrap_or(collected),
        turns,
        tool_calls: calls,
        token_estimate: tokens,
        gateway_tokens: extra.gateway_tokens,
        gateway_calls: extra.gateway_calls,
        wall_ms: extra.wall_ms,
        termination: extra.termination,
        evidence: evidence.items.clone(),
        error: extra.error,
    }));
    ControllerRun { evidence, trace }
}

#[derive(Default)]
struct Extra {
    seeds: Vec<String>,
    gateway_tokens: u64,
    gateway_calls: u32,
    wall_ms: u64,
    termination: Option<Termination>,
    error: Option<String>,
    collected_override: Option<Vec<(String, String)>>,
}

/// Pure dense retrieval.
pub fn run_vector_only(question: &str, ctx: ToolContext<'_>, cfg: &ControllerConfig) -> Result<ControllerRun> {
    run_vector_only_q(None, question, ctx, cfg)
}

fn run_vector_only_q(
    qid: Option<&str>,
    question: &str,
    ctx: ToolContext<'_>,
    cfg: &ControllerConfig,
) -> Result<ControllerRun> {
    let watch = ctx.clock.start();
    let mut trace = Trace::default();
    trace.push(header(ControllerKind::VectorOnly, qid, question, cfg));
    let q = ctx.embedder.embed(question)?;
    let items = ctx
        .index
        .search_top_k(&q, cfg.k)?
        .into_iter()
        .map(|h| EvidenceItem {
            chunk_id: h.chunk_id,
            score: h.similarity,
            source: EvidenceSource::Seed,
        })
        .collect();
    Ok(finish(
        ControllerKind::VectorOnly,
        items,
        trace,
        None,
        Extra {
            wall_ms: watch.elapsed_ms(),
            ..Extra::default()
        },
    ))
}

/// Vector seeds, entity counting over the seeds, capped per-entity expansion,
/// merge, and vector re-rank.
pub fn run_graphrag_local(question: &str, ctx: ToolContext<'_>, cfg: &ControllerConfig) -> Result<ControllerRun> {
    run_graphrag_local_q(None, question, ctx, cfg)
}

fn run_graphrag_local_q(
    qid: Option<&str>,
    question: &str,
    ctx: ToolContext<'_>,
    cfg: &ControllerConfig,
) -> Result<ControllerRun> {
    let watch = ctx.clock.start();
    let mut trace = Trace::default();
    trace.push(header(ControllerKind::GraphragLocal, qid, question, cfg));
    let graph = ctx.graph;
    let q = ctx.embedder.embed(question)?;

    let seeds = ctx.index.search_top_k(&q, cfg.seed_k)?;

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for hit in &seeds {
        if let Ok(ents) = graph.entities_for_chunk(&hit.chunk_id) {
            for e in ents {
                *counts.entry(e.entity_uri.as_str()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize, usize, String)> = counts
        .into_iter()
        .filter_map(|(uri, n)| {
            graph
                .entity(uri)
                .map(|e| (uri, n, e.chunk_count, normalize_label(&e.label)))
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then_with(|| b.2.cmp(&a.2))
            .then_with(|| a.3.cmp(&b.3))
            .then_with(|| a.0.cmp(b.0))
    });
    ranked.truncate(cfg.expand_entities);

    let mut candidates: IndexMap<String, (f64, EvidenceSource)> = IndexMap::new();
    for hit in &seeds {
        candidates.insert(hit.chunk_id.clone(), (hit.similarity, EvidenceSource::Seed));
    }
    for (uri, ..) in &ranked {
        let mut chunks: Vec<(f64, &str)> = graph
            .chunks_for_entity(uri)?
            .into_iter()
            .map(|id| Ok((ctx.index.similarity(&q, id)?, id)))
            .collect::<Result<_>>()?;
        chunks.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        chunks.truncate(cfg.per_entity_chunk_cap);
        for (sim, id) in chunks {
            candidates
                .entry(id.to_string())
                .or_insert((sim, EvidenceSource::Expansion));
        }
    }

    let mut items: Vec<EvidenceItem> = candidates
        .into_iter()
        .map(|(chunk_id, (score, source))| EvidenceItem {
            chunk_id,
            score,
            source,
        })
        .collect();
    sort_items(&mut items);
    items.truncate(cfg.k);
    Ok(finish(
        ControllerKind::GraphragLocal,
        items,
        trace,
        None,
        Extra {
            wall_ms: watch.elapsed_ms(),
            ..Extra::default()
        },
    ))
}

/// Fill up to `k` from plain vector search at a discount, skipping chunks
/// already present, then sort and truncate.
fn backfill_and_rank(
    mut items: Vec<EvidenceItem>,
    hits: impl IntoIterator<Item = (String, f64)>,
    cfg: &ControllerConfig,
) -> Vec<EvidenceItem> {
    if items.len() < cfg.k {
        let present: HashSet<String> = items.iter().map(|i| i.chunk_id.clone()).collect();
        let need = cfg.k - items.len();
        items.extend(
            hits.into_iter()
                .filter(|(id, _)| !present.contains(id))
                .take(need)
                .map(|(chunk_id, sim)| EvidenceItem {
                    chunk_id,
                    score: cfg.backfill_discount * sim,
                    source: EvidenceSource::Backfill,
                }),
        );
    }
    sort_items(&mut items);
    items.truncate(cfg.k);
    items
}

/// Final ranking for explicitly collected chunks: `min(cosine + boost, 1)`,
/// then vector backfill at `backfill_discount` when fewer than `k` remain.
pub fn score_and_backfill<'s>(
    collected: impl IntoIterator<Item = &'s str>,
    question: &Embedding,
    ctx: ToolContext<'_>,
    cfg: &ControllerConfig,
) -> Result<Vec<EvidenceItem>> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for id in collected {
        if !seen.insert(id) {
            continue;
        }
        let sim = ctx.index.similarity(question, id)?;
        items.push(EvidenceItem {
            chunk_id: id.to_string(),
            score: (sim + cfg.boost).min(1.0),
            source: EvidenceSource::Explored,
        });
    }
    let hits = if items.len() < cfg.k {
        ctx.index.search_top_k(question, cfg.k)?
    } else {
        Vec::new()
    };
    Ok(backfill_and_rank(
        items,
        hits.into_iter().map(|h| (h.chunk_id, h.similarity)),
        cfg,
    ))
}

/// Rule-based breadth-first traversal from the question's seed entities.
pub fn run_heuristic_rlm(question: &str, ctx: ToolContext<'_>, cfg: &ControllerConfig) -> Result<ControllerRun> {
    run_heuristic_rlm_q(None, question, ctx, cfg)
}

fn run_heuristic_rlm_q(
    qid: Option<&str>,
    question: &str,
    ctx: ToolContext<'_>,
    cfg: &ControllerConfig,
) -> Result<ControllerRun> {
    let watch = ctx.clock.start();
    let ctx = ToolContext {
        n_seed: cfg.n_seed,
        gateway: None,
        ..ctx
    };
    let mut trace = Trace::default();
    trace.push(header(ControllerKind::HeuristicRlm, qid, question, cfg));
    let q = ctx.embedder.embed(question)?;
    let mut rt = ToolRuntime::new(ctx);

    rt.state.turn = 1;
    let seeds: Vec<String> = match rt.execute(&ToolAction::EntitySearch {
        query: question.to_string(),
    }) {
        ToolOutput::Entities(es) => es.into_iter().map(|e| e.entity_uri).collect(),
        _ => Vec::new(),
    };

    let mut frontier: VecDeque<String> = seeds.iter().cloned().collect();
    let mut depth: HashMap<String, usize> = seeds.iter().map(|s| (s.clone(), 0)).collect();
    let mut visited: HashSet<String> = HashSet::new();
    let mut collected: IndexMap<String, f64> = IndexMap::new();
    let mut stall = 0u32;

    let termination = loop {
        if collected.len() >= cfg.k {
            break Termination::BudgetFilled;
        }
        let Some(entity) = frontier.pop_front() else {
            break Termination::FrontierEmpty;
        };
        if !visited.insert(entity.clone()) {
            continue;
        }
        rt.state.turn += 1;
        let mut new_chunks = 0usize;
        if let ToolOutput::Chunks(chunks) = rt.execute(&ToolAction::GetChunksForEntity { uri: entity.clone() }) {
            for c in chunks {
                if !collected.contains_key(&c.chunk_id) {
                    let sim = ctx.index.similarity(&q, &c.chunk_id)?;
                    collected.insert(c.chunk_id, sim);
                    new_chunks += 1;
                }
            }
        }
        let d = depth.get(&entity).copied().unwrap_or(0);
        if d < cfg.bfs_depth {
            if let ToolOutput::Neighbors(ns) = rt.execute(&ToolAction::ExpandNeighbors { uri: entity.clone() }) {
                for n in ns {
                    if !visited.contains(&n.neighbor_uri) {
                        depth.insert(n.neighbor_uri.clone(), d + 1);
                        frontier.push_back(n.neighbor_uri);
                    }
                }
            }
        }
        if new_chunks == 0 {
            stall += 1;
        } else {
            stall = 0;
        }
        rt.state.stall_counter = stall;
        if stall >= cfg.stall_break_heuristic {
            break Termination::Stalled;
        }
    };

    let mut items: Vec<EvidenceItem> = collected
        .iter()
        .map(|(id, &sim)| EvidenceItem {
            chunk_id: id.clone(),
            score: sim,
            source: EvidenceSource::Explored,
        })
        .collect();
    let mut hits = Vec::new();
    if items.len() < cfg.k {
        if let ToolOutput::Hits(hs) = rt.execute(&ToolAction::VectorSearch {
            query: question.to_string(),
            k: cfg.k,
        }) {
            hits = hs.into_iter().map(|h| (h.chunk_id, h.similarity)).collect();
        }
    }
    sort_items(&mut items);
    items = backfill_and_rank(items, hits, cfg);

    trace
        .events
        .extend(rt.state.tool_calls.iter().cloned().map(TraceEvent::ToolCall));
    let collected_notes = collected
        .iter()
        .map(|(id, s)| (id.clone(), format!("bfs similarity {s:.4}")))
        .collect();
    Ok(finish(
        ControllerKind::HeuristicRlm,
        items,
        trace,
        Some(&rt),
        Extra {
            seeds,
            wall_ms: watch.elapsed_ms(),
            termination: Some(termination),
            collected_override: Some(collected_notes),
            ..Extra::default()
        },
    ))
}

/// LLM-driven exploration loop over the tool runtime.
pub fn run_llm_rlm(
    question: &str,
    ctx: ToolContext<'_>,
    cfg: &ControllerConfig,
    gateway: &dyn Gateway,
) -> Result<ControllerRun> {
    run_llm_rlm_q(None, question, ctx, cfg, gateway)
}

fn run_llm_rlm_q(
    qid: Option<&str>,
    question: &str,
    ctx: ToolContext<'_>,
    cfg: &ControllerConfig,
    gateway: &dyn Gateway,
) -> Result<ControllerRun> {
    let watch = ctx.clock.start();
    let ctx = ToolContext {
        n_seed: cfg.n_seed,
        gateway: Some(gateway),
        ..ctx
    };
    let mut trace = Trace::default();
    trace.push(header(ControllerKind::LlmRlm, qid, question, cfg));
    let q = ctx.embedder.embed(question)?;
    let mut rt = ToolRuntime::new(ctx);
    let schemas = tool_schemas();
    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut stalled = 0u32;
    let mut gateway_tokens = 0u64;
    let mut gateway_calls = 0u32;
    let mut termination = Termination::Budget;
    let mut error = None;

    for t in 1..=cfg.max_turns {
        rt.state.turn = t;
        let req = TurnRequest {
            system_prompt: default_system_prompt().to_string(),
            question: question.to_string(),
            state_summary: rt.state.summary(ctx.graph),
            history: history.clone(),
            tool_schemas: schemas.clone(),
            turn: t,
        };
        gateway_calls += 1;
        gateway_tokens += estimate_tokens(&serde_json::to_string(&req)?);
        let before = rt.state.collected.len();
        let calls_before = rt.state.tool_calls.len();
        let mut record = TurnRecord {
            turn: t,
            proposed: 0,
            executed: 0,
            dropped: Vec::new(),
            duplicates: 0,
            fallback: false,
            final_text: None,
            error: None,
            collected: before,
            stalled,
        };

        match gateway.turn(&req) {
            Err(e) if e.is_retriable() => {
                record.error = Some(e.to_string());
            }
            Err(e) => {
                record.error = Some(e.to_string());
                error = Some(e.to_string());
                termination = Termination::GatewayError;
                trace.push(TraceEvent::Turn(record));
                break;
            }
            Ok(TurnResponse::Final(text)) => {
                gateway_tokens += estimate_tokens(&text);
                record.final_text = Some(text);
                termination = Termination::FinalText;
                trace.push(TraceEvent::Turn(record));
                break;
            }
            Ok(resp @ TurnResponse::Actions { .. }) => {
                gateway_tokens += estimate_tokens(&resp.to_wire().to_string());
                let TurnResponse::Actions { actions, dropped } = resp else {
                    unreachable!()
                };
                record.proposed = actions.len() + dropped.len();
                record.dropped = dropped;
                let mut seen = HashSet::new();
                let mut unique = Vec::with_capacity(actions.len());
                for a in actions {
                    if seen.insert(a.clone()) {
                        unique.push(a);
                    } else {
                        record.duplicates += 1;
                    }
                }
                if unique.is_empty() {
                    record.fallback = true;
                    unique.push(ToolAction::VectorSearch {
                        query: question.to_string(),
                        k: cfg.k,
                    });
                }
                for a in &unique {
                    let out = rt.execute(a);
                    history.push(HistoryEntry {
                        turn: t,
                        tool: a.name().to_string(),
                        args: a.args(),
                        result: serde_json::to_value(&out)?,
                    });
                }
                record.executed = unique.len();
            }
        }

        if rt.state.collected.len() == before {
            stalled += 1;
        } else {
            stalled = 0;
        }
        rt.state.stall_counter = stalled;
        record.collected = rt.state.collected.len();
        record.stalled = stalled;
        trace.events.extend(
            rt.state.tool_calls[calls_before..]
                .iter()
                .cloned()
                .map(TraceEvent::ToolCall),
        );
        trace.push(TraceEvent::Turn(record));
        if stalled >= cfg.stall_break_llm && 2 * t >= cfg.max_turns {
            termination = Termination::Stalled;
            break;
        }
    }

    let items = score_and_backfill(rt.state.collected.keys().map(String::as_str), &q, ctx, cfg)?;
    Ok(finish(
        ControllerKind::LlmRlm,
        items,
        trace,
        Some(&rt),
        Extra {
            gateway_tokens,
            gateway_calls,
            wall_ms: watch.elapsed_ms(),
            termination: Some(termination),
            error,
            ..Extra::default()
        },
    ))
}

/// Dispatch by controller kind. The LLM controller requires a gateway.
pub fn run_controller(
    kind: ControllerKind,
    qid: Option<&str>,
    question: &str,
    ctx: ToolContext<'_>,
    cfg: &ControllerConfig,
) -> Result<ControllerRun> {
    match kind {
        ControllerKind::VectorOnly => run_vector_only_q(qid, question, ctx, cfg),
        ControllerKind::GraphragLocal => run_graphrag_local_q(qid, question, ctx, cfg),
        ControllerKind::HeuristicRlm => run_heuristic_rlm_q(qid, question, ctx, cfg),
        ControllerKind::LlmRlm => {
            let gw = ctx
                .gateway
                .ok_or_else(|| Error::Usage("the llm controller needs a gateway (--script or LLM_URL)".into()))?;
            run_llm_rlm_q(qid, question, ctx, cfg, gw)
        }
    }
}
