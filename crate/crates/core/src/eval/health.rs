//! Graph-health metrics and failure categories derived from eval records
//! and traces, with no extra labeling.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::controllers::EvidenceSource;
use crate::entity::entity_search;
use crate::graph::MentionGraph;
use crate::tools::ToolOutput;
use crate::trace::Trace;

use super::report::{EvalRecord, QuestionGold};

pub const MAX_HOPS: usize = 3;
const PROVENANCE_MIN_EXPLORED: usize = 5;
const PROVENANCE_MAX_PRECISION: f64 = 0.2;
const QUERYABILITY_MIN_CALLS: usize = 10;
const QUERYABILITY_MAX_YIELD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgHealthReport {
    pub controller: String,
    pub questions: usize,
    pub seed_hit_rate: Option<f64>,
    /// Pooled over all gold chunks, keyed by hop count.
    pub reachability_at_h: BTreeMap<usize, f64>,
    pub hop_efficiency: Option<f64>,
    pub neighborhood_noise: Option<f64>,
    pub backfill_reliance: Option<f64>,
    pub evidence_redundancy: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCategory {
    Coverage,
    Connectivity,
    Provenance,
    Queryability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionFailures {
    pub qid: String,
    pub controller: String,
    pub categories: Vec<FailureCategory>,
    pub reasons: Vec<String>,
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets scoring 0.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean pairwise Jaccard of the chunks' entity sets; `None` below two chunks.
pub fn evidence_redundancy(graph: &MentionGraph, chunk_ids: &[&str]) -> Option<f64> {
    if chunk_ids.len() < 2 {
        return None;
    }
    let sets: Vec<BTreeSet<&str>> = chunk_ids
        .iter()
        .map(|id| {
            graph
                .entities_for_chunk(id)
                .map(|es| es.into_iter().map(|e| e.entity_uri.as_str()).collect())
                .unwrap_or_default()
        })
        .collect();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            sum += jaccard(&sets[i], &sets[j]);
            pairs += 1;
        }
    }
    Some(sum / pairs as f64)
}

/// For each `expand_neighbors` call: neighbors returned divided by
/// `max(1, neighbors later passed to get_chunks_for_entity)`.
pub fn neighborhood_noise_ratios(trace: &Trace) -> Vec<f64> {
    let calls: Vec<_> = trace.tool_calls().collect();
    let explored_uri = |i: usize| -> Option<&str> {
        (calls[i].tool == "get_chunks_for_entity")
            .then(|| calls[i].args.get("uri").and_then(|u| u.as_str()))
            .flatten()
    };
    let mut out = Vec::new();
    for (i, call) in calls.iter().enumerate() {
        if call.tool != "expand_neighbors" {
            continue;
        }
        let Ok(ToolOutput::Neighbors(ns)) = serde_json::from_value::<ToolOutput>(call.result.clone()) else {
            continue;
        };
        let returned: HashSet<&str> = ns.iter().map(|n| n.neighbor_uri.as_str()).collect();
        let used: HashSet<&str> = (i + 1..calls.len())
            .filter_map(explored_uri)
            .filter(|u| returned.contains(u))
            .collect();
        out.push(ns.len() as f64 / used.len().max(1) as f64);
    }
    out
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    Some(if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    })
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

/// Health metrics for one controller's records. Traces are looked up by
/// `trace_ref`; missing traces null the trace-derived metrics for that
/// record and add a warning.
pub fn compute_kg_health(
    controller: &str,
    records: &[EvalRecord],
    traces: &BTreeMap<String, Trace>,
    graph: &MentionGraph,
    questions: &[QuestionGold],
    n_seed: usize,
) -> KgHealthReport {
    let gold_of: BTreeMap<&str, &QuestionGold> = questions.iter().map(|q| (q.qid.as_str(), q)).collect();
    let recs: Vec<&EvalRecord> = records
        .iter()
        .filter(|r| r.controller == controller && !r.flagged)
        .collect();
    let mut warnings = Vec::new();

    let mut seed_hits = 0usize;
    let mut seeded = 0usize;
    let mut reach_hit = [0usize; MAX_HOPS];
    let mut reach_total = 0usize;
    for r in &recs {
        let Some(q) = gold_of.get(r.qid.as_str()) else {
            warnings.push(format!("no gold mapping for {}", r.qid));
            continue;
        };
        let seeds: Vec<String> = entity_search(&q.question, graph, n_seed)
            .into_iter()
            .map(|s| s.entity_uri)
            .collect();
        let seeds: Vec<&str> = seeds.iter().map(String::as_str).collect();
        let gold = &q.mapping.chunks;
        seeded += 1;
        if graph.reachable_gold(&seeds, gold, 0).0 > 0 {
            seed_hits += 1;
        }
        reach_total += gold.len();
        for (h, slot) in reach_hit.iter_mut().enumerate() {
            *slot += graph.reachable_gold(&seeds, gold, h + 1).0;
        }
    }

    let mut gold_found = 0usize;
    let mut calls = 0usize;
    let mut noise = Vec::new();
    for r in &recs {
        match traces.get(&r.trace_ref) {
            Some(t) => {
                gold_found += r.gold_retrieved;
                calls += t.tool_calls().count();
                noise.extend(neighborhood_noise_ratios(t));
            }
            None => warnings.push(format!("missing trace {}", r.trace_ref)),
        }
    }

    let backfill: Vec<f64> = recs
        .iter()
        .filter(|r| !r.sources.is_empty())
        .map(|r| r.sources.iter().filter(|s| **s == EvidenceSource::Backfill).count() as f64 / r.sources.len() as f64)
        .collect();
    let redundancy: Vec<f64> = recs
        .iter()
        .filter_map(|r| {
            let ids: Vec<&str> = r.retrieved.iter().map(String::as_str).collect();
            evidence_redundancy(graph, &ids)
        })
        .collect();
    let avg = |xs: &[f64]| ratio(xs.iter().sum(), xs.len() as f64);

    KgHealthReport {
        controller: controller.to_string(),
        questions: recs.len(),
        seed_hit_rate: ratio(seed_hits as f64, seeded as f64),
        reachability_at_h: if reach_total == 0 {
            BTreeMap::new()
        } else {
            (1..=MAX_HOPS)
                .map(|h| (h, reach_hit[h - 1] as f64 / reach_total as f64))
                .collect()
        },
        hop_efficiency: ratio(gold_found as f64, calls as f64),
        neighborhood_noise: median(noise),
        backfill_reliance: avg(&backfill),
        evidence_redundancy: avg(&redundancy),
        warnings,
    }
}

/// Per-question failure categories:
/// coverage when no seed touches gold or gold arrives only through backfill;
/// connectivity when some gold chunk is unreachable within three hops;
/// provenance when at least five explored chunks were kept at precision below 0.2;
/// queryability when ten or more tool calls yield under 0.1 gold chunks per call.
pub fn categorize_failures(
    records: &[EvalRecord],
    graph: &MentionGraph,
    questions: &[QuestionGold],
    n_seed: usize,
) -> Vec<QuestionFailures> {
    let gold_of: BTreeMap<&str, &QuestionGold> = questions.iter().map(|q| (q.qid.as_str(), q)).collect();
    let mut out = Vec::new();
    for r in records.iter().filter(|r| !r.flagged) {
        let Some(q) = gold_of.get(r.qid.as_str()) else {
            continue;
        };
        let gold = &q.mapping.chunks;
        let seeds: Vec<String> = entity_search(&q.question, graph, n_seed)
            .into_iter()
            .map(|s| s.entity_uri)
            .collect();
        let seeds: Vec<&str> = seeds.iter().map(String::as_str).collect();
        let mut cats = BTreeSet::new();
        let mut reasons = Vec::new();

        if seeds.is_empty() {
            cats.insert(FailureCategory::Coverage);
            reasons.push("no seed entities for the question".to_string());
        } else if graph.reachable_gold(&seeds, gold, 0).0 == 0 {
            cats.insert(FailureCategory::Coverage);
            reasons.push("no seed entity is mentioned by a gold chunk".to_string());
        }
        let gold_sources: Vec<EvidenceSource> = r
            .retrieved
            .iter()
            .zip(&r.sources)
            .filter(|(c, _)| gold.contains(*c))
            .map(|(_, s)| *s)
            .collect();
        if !gold_sources.is_empty() && gold_sources.iter().all(|s| *s == EvidenceSource::Backfill) {
            cats.insert(FailureCategory::Coverage);
            reasons.push("gold retrieved only through backfill".to_string());
        }
        let (hit, total) = graph.reachable_gold(&seeds, gold, MAX_HOPS);
        if hit < total {
            cats.insert(FailureCategory::Connectivity);
            reasons.push(format!(
                "{} of {} gold chunks unreachable within {MAX_HOPS} hops",
                total - hit,
                total
            ));
        }
        let explored: Vec<&String> = r
            .retrieved
            .iter()
            .zip(&r.sources)
            .filter(|(_, s)| **s != EvidenceSource::Backfill)
            .map(|(c, _)| c)
            .collect();
        if explored.len() >= PROVENANCE_MIN_EXPLORED {
            let p = explored.iter().filter(|c| gold.contains(**c)).count() as f64 / explored.len() as f64;
            if p < PROVENANCE_MAX_PRECISION {
                cats.insert(FailureCategory::Provenance);
                reasons.push(format!("explored evidence precision {p:.2}"));
            }
        }
        if r.tool_calls >= QUERYABILITY_MIN_CALLS {
            let y = r.gold_retrieved as f64 / r.tool_calls as f64;
            if y < QUERYABILITY_MAX_YIELD {
                cats.insert(FailureCategory::Queryability);
                reasons.push(format!("{} tool calls, {y:.3} gold chunks per call", r.tool_calls));
            }
        }
        if !cats.is_empty() {
            out.push(QuestionFailures {
                qid: r.qid.clone(),
                controller: r.controller.clone(),
                categories: cats.into_iter().collect(),
                reasons,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jaccard_edges() {
        let e: BTreeSet<u8> = BTreeSet::new();
        assert_eq!(jaccard(&e, &e), 0.0);
        let a: BTreeSet<u8> = [1, 2].into();
        let b: BTreeSet<u8> = [2, 3].into();
        assert!((jaccard(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(vec![]), None);
    }
}
