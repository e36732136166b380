//! Batch evaluation across controllers and the report it produces.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::{run_controller, ControllerConfig, ControllerKind, EvidenceSource};
use crate::error::{Error, Result};
use crate::tools::{Clock, ToolContext};
use crate::trace::Trace;

use super::bootstrap::{paired_bootstrap, BootstrapReport, DEFAULT_RESAMPLES};
use super::gold::{GoldMapper, GoldMapping};
use super::metrics::{prf1, scatter_bin, ScatterBin};
use super::{QType, Question};

pub const REPORT_VERSION: &str = "kgnav-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub controllers: Vec<ControllerKind>,
    pub config: ControllerConfig,
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
    /// Worker threads for question-level parallelism; 0 uses all cores.
    pub parallelism: usize,
    pub clock: Clock,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            controllers: vec![
                ControllerKind::VectorOnly,
                ControllerKind::GraphragLocal,
                ControllerKind::HeuristicRlm,
            ],
            config: ControllerConfig::default(),
            bootstrap_resamples: DEFAULT_RESAMPLES,
            bootstrap_seed: 0,
            parallelism: 0,
            clock: Clock::Wall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionGold {
    pub qid: String,
    pub question: String,
    pub qtype: QType,
    pub mapping: GoldMapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub qid: String,
    pub controller: String,
    pub qtype: QType,
    pub retrieved: Vec<String>,
    pub sources: Vec<EvidenceSource>,
    pub scores: Vec<f64>,
    pub gold_count: usize,
    pub gold_retrieved: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub scatter_bin: ScatterBin,
    /// Empty gold set; excluded from headline aggregates.
    pub flagged: bool,
    pub failed: Option<String>,
    pub tool_calls: usize,
    pub token_estimate: u64,
    pub gateway_tokens: u64,
    pub gateway_calls: u32,
    pub wall_ms: u64,
    pub trace_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub controller: String,
    pub scored: usize,
    pub flagged: usize,
    pub failed: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mean_tool_calls: f64,
    pub mean_token_estimate: f64,
    pub mean_gateway_tokens: f64,
    pub mean_wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub controller: String,
    pub group: String,
    pub n: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// `delta = f1(a) - f1(b)` per question, over questions with gold evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub bootstrap: Option<BootstrapReport>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: String,
    pub options: EvalOptions,
    pub questions: Vec<QuestionGold>,
    pub records: Vec<EvalRecord>,
    pub headline: Vec<Headline>,
    pub comparisons: Vec<Comparison>,
    pub by_qtype: Vec<GroupStats>,
    pub by_scatter: Vec<GroupStats>,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: EvalReport,
    /// `(trace_ref, trace)` for every record, in record order.
    pub traces: Vec<(String, Trace)>,
}

fn trace_ref(controller: ControllerKind, qid: &str) -> String {
    let safe: String = qid
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("traces/{controller}/{safe}.jsonl")
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn group_stats(controller: &str, group: String, recs: &[&EvalRecord]) -> GroupStats {
    GroupStats {
        controller: controller.to_string(),
        group,
        n: recs.len(),
        precision: mean(recs.iter().map(|r| r.precision)),
        recall: mean(recs.iter().map(|r| r.recall)),
        f1: mean(recs.iter().map(|r| r.f1)),
    }
}

fn evaluate_one(
    kind: ControllerKind,
    q: &Question,
    gold: &BTreeSet<String>,
    ctx: ToolContext<'_>,
    cfg: &ControllerConfig,
) -> (EvalRecord, Trace) {
    let run = run_controller(kind, Some(&q.qid), &q.question, ctx, cfg);
    let (retrieved, sources, scores, failed, counts, trace) = match run {
        Ok(run) => {
            let ev = &run.evidence;
            let counts = (
                run.trace.tool_calls().count(),
                ev.token_estimate,
                ev.gateway_tokens,
                ev.gateway_calls,
                ev.wall_ms,
            );
            (
                ev.items.iter().map(|i| i.chunk_id.clone()).collect::<Vec<_>>(),
                ev.items.iter().map(|i| i.source).collect(),
                ev.items.iter().map(|i| i.score).collect(),
                ev.error.clone(),
                counts,
                run.trace,
            )
        }
        Err(e) => (
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Some(e.to_string()),
            (0, 0, 0, 0, 0),
            Trace::default(),
        ),
    };
    let m = prf1(retrieved.iter().map(String::as_str), gold);
    let (bin, flagged) = scatter_bin(gold.len());
    let record = EvalRecord {
        qid: q.qid.clone(),
        controller: kind.to_string(),
        qtype: q.qtype,
        gold_retrieved: retrieved.iter().filter(|c| gold.contains(*c)).count(),
        retrieved,
        sources,
        scores,
        gold_count: gold.len(),
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        scatter_bin: bin,
        flagged,
        failed,
        tool_calls: counts.0,
        token_estimate: counts.1,
        gateway_tokens: counts.2,
        gateway_calls: counts.3,
        wall_ms: counts.4,
        trace_ref: trace_ref(kind, &q.qid),
    };
    (record, trace)
}

/// Map gold evidence once, run every controller on every question, and
/// aggregate. Records are ordered by controller, then question file order.
pub fn run_eval(questions: &[Question], ctx: ToolContext<'_>, opts: &EvalOptions) -> Result<EvalOutcome> {
    opts.config.validate()?;
    if opts.controllers.is_empty() {
        return Err(Error::Usage("no controllers selected".into()));
    }
    if opts.controllers.contains(&ControllerKind::LlmRlm) && ctx.gateway.is_none() {
        return Err(Error::Usage("the llm controller needs a gateway".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallelism)
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;

    let chunks = ctx.graph.chunks();
    let mapper = GoldMapper::new(chunks, ctx.index, ctx.embedder);
    let golds: Vec<GoldMapping> = pool.install(|| {
        questions
            .par_iter()
            .map(|q| mapper.map(&q.gold_evidence))
            .collect::<Result<_>>()
    })?;

    let jobs: Vec<(ControllerKind, usize)> = opts
        .controllers
        .iter()
        .flat_map(|&k| (0..questions.len()).map(move |i| (k, i)))
        .collect();
    let results: Vec<(EvalRecord, Trace)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(k, i)| evaluate_one(k, &questions[i], &golds[i].chunks, ctx, &opts.config))
            .collect()
    });

    let (records, traces): (Vec<EvalRecord>, Vec<Trace>) = results.into_iter().unzip();
    let traces = records.iter().map(|r| r.trace_ref.clone()).zip(traces).collect();
    let question_gold = questions
        .iter()
        .zip(golds)
        .map(|(q, mapping)| QuestionGold {
            qid: q.qid.clone(),
            question: q.question.clone(),
            qtype: q.qtype,
            mapping,
        })
        .collect();
    let report = aggregate(question_gold, records, opts)?;
    Ok(EvalOutcome { report, traces })
}

fn aggregate(questions: Vec<QuestionGold>, records: Vec<EvalRecord>, opts: &EvalOptions) -> Result<EvalReport> {
    let names: Vec<String> = opts.controllers.iter().map(|k| k.to_string()).collect();
    let scored = |c: &str| -> Vec<&EvalRecord> { records.iter().filter(|r| r.controller == c && !r.flagged).collect() };

    let mut headline = Vec::new();
    let mut by_qtype = Vec::new();
    let mut by_scatter = Vec::new();
    for c in &names {
        let all: Vec<&EvalRecord> = records.iter().filter(|r| &r.controller == c).collect();
        let ok = scored(c);
        headline.push(Headline {
            controller: c.clone(),
            scored: ok.len(),
            flagged: all.iter().filter(|r| r.flagged).count(),
            failed: all.iter().filter(|r| r.failed.is_some()).count(),
            precision: mean(ok.iter().map(|r| r.precision)),
            recall: mean(ok.iter().map(|r| r.recall)),
            f1: mean(ok.iter().map(|r| r.f1)),
            mean_tool_calls: mean(all.iter().map(|r| r.tool_calls as f64)),
            mean_token_estimate: mean(all.iter().map(|r| r.token_estimate as f64)),
            mean_gateway_tokens: mean(all.iter().map(|r| r.gateway_tokens as f64)),
            mean_wall_ms: mean(all.iter().map(|r| r.wall_ms as f64)),
        });
        for t in QType::ALL {
            let g: Vec<&EvalRecord> = ok.iter().copied().filter(|r| r.qtype == t).collect();
            if !g.is_empty() {
                by_qtype.push(group_stats(c, t.to_string(), &g));
            }
        }
        for b in ScatterBin::ALL {
            let g: Vec<&EvalRecord> = ok.iter().copied().filter(|r| r.scatter_bin == b).collect();
            if !g.is_empty() {
                by_scatter.push(group_stats(c, b.as_str().to_string(), &g));
            }
        }
    }

    let mut comparisons = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let fb: BTreeMap<&str, f64> = scored(b).into_iter().map(|r| (r.qid.as_str(), r.f1)).collect();
            let deltas: Vec<f64> = scored(a)
                .into_iter()
                .filter_map(|r| fb.get(r.qid.as_str()).map(|f| r.f1 - f))
                .collect();
            let (bootstrap, note) = if deltas.len() < 2 {
                (None, Some(format!("only {} paired questions", deltas.len())))
            } else {
                (
                    Some(paired_bootstrap(
                        &deltas,
                        opts.bootstrap_resamples,
                        opts.bootstrap_seed,
                    )?),
                    None,
                )
            };
            comparisons.push(Comparison {
                a: a.clone(),
                b: b.clone(),
                bootstrap,
                note,
            });
        }
    }

    Ok(EvalReport {
        version: REPORT_VERSION.to_string(),
        options: opts.clone(),
        questions,
        records,
        headline,
        comparisons,
        by_qtype,
        by_scatter,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn gold_for(&self, qid: &str) -> Option<&QuestionGold> {
        self.questions.iter().find(|q| q.qid == qid)
    }

    /// Plain-text tables: headline metrics, pairwise comparisons, and
    /// F1 by question type and by evidence scatter.
    pub fn render_tables(&self) -> String {
        let pct = |x: f64| format!("{:.1}", 100.0 * x);
        let mut out = String::new();
        let unmapped: usize = self.questions.iter().map(|q| q.mapping.unmapped()).sum();
        let _ = writeln!(
            out,
            "Questions: {}   unmapped evidence sentences: {}\n",
            self.questions.len(),
            unmapped
        );
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>7} {:>7} {:>7} {:>7} {:>9} {:>9} {:>8}",
            "controller", "n", "P%", "R%", "F1%", "calls", "tokens", "gw_tok", "ms"
        );
        for h in &self.headline {
            let _ = writeln!(
                out,
                "{:<16} {:>6} {:>7} {:>7} {:>7} {:>7.1} {:>9.0} {:>9.0} {:>8.1}",
                h.controller,
                h.scored,
                pct(h.precision),
                pct(h.recall),
                pct(h.f1),
                h.mean_tool_calls,
                h.mean_token_estimate,
                h.mean_gateway_tokens,
                h.mean_wall_ms
            );
        }
        let flagged: usize = self.headline.first().map_or(0, |h| h.flagged);
        if flagged > 0 {
            let _ = writeln!(out, "({flagged} questions with no gold chunks excluded)");
        }

        let _ = writeln!(
            out,
            "\n{:<34} {:>8} {:>19} {:>8} {:>14}",
            "comparison (a - b)", "dF1 pp", "95% CI pp", "p", "W/T/L"
        );
        for c in &self.comparisons {
            let name = format!("{} vs {}", c.a, c.b);
            match &c.bootstrap {
                Some(b) => {
                    let _ = writeln!(
                        out,
                        "{:<34} {:>+8.2} {:>19} {:>8.4} {:>14}",
                        name,
                        100.0 * b.mean_delta,
                        format!("[{:+.2}, {:+.2}]", 100.0 * b.ci_low, 100.0 * b.ci_high),
                        b.p_two_sided,
                        format!("{}/{}/{}", b.wins, b.ties, b.losses)
                    );
                }
                None => {
                    let _ = writeln!(out, "{:<34} {}", name, c.note.as_deref().unwrap_or("n/a"));
                }
            }
        }

        for (title, groups) in [
            ("question type", &self.by_qtype),
            ("evidence scatter", &self.by_scatter),
        ] {
            let _ = writeln!(out, "\nF1% by {title}");
            let mut cols: Vec<&str> = Vec::new();
            for g in groups.iter() {
                if !cols.contains(&g.group.as_str()) {
                    cols.push(&g.group);
                }
            }
            let _ = write!(out, "{:<16}", "controller");
            for c in &cols {
                let _ = write!(out, " {:>24}", c);
            }
            out.push('\n');
            for h in &self.headline {
                let _ = write!(out, "{:<16}", h.controller);
                for c in &cols {
                    let cell = groups
                        .iter()
                        .find(|g| g.controller == h.controller && g.group == *c)
                        .map(|g| format!("{} (n={})", pct(g.f1), g.n))
                        .unwrap_or_else(|| "-".into());
                    let _ = write!(out, " {:>24}", cell);
                }
                out.push('\n');
            }
        }
        out
    }

    /// Write `report.json`, `report.txt` and every trace under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, traces: &[(String, Trace)]) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()).map_err(|e| Error::io(&json, e))?;
        let txt = dir.join("report.txt");
        std::fs::write(&txt, self.render_tables()).map_err(|e| Error::io(&txt, e))?;
        for (r, t) in traces {
            t.write(dir.join(r))?;
        }
        Ok(())
    }
}
