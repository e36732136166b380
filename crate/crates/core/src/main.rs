use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use kgnav::config::{GatewayChoice, RunConfig};
use kgnav::controllers::{run_controller, ControllerKind};
use kgnav::corpus::load_corpus;
use kgnav::entity::{load_annotations, Gazetteer};
use kgnav::eval::{categorize_failures, compute_kg_health, load_questions, run_eval, EvalOptions, EvalReport};
use kgnav::gateway::{Gateway, HttpGateway, ScriptedGateway};
use kgnav::tools::sub_query_prompt;
use kgnav::trace::Trace;
use kgnav::{BuildOptions, Clock, Engine, Error, Result};

/// Mention-graph retrieval: build a graph and index over a corpus, retrieve
/// evidence with four controllers, and evaluate them against gold evidence.
///
/// Settings come from an optional `key = value` config file; every key can be
/// overridden by the flag of the same name.
#[derive(Parser, Debug)]
#[command(name = "kgnav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file of `key = value` lines
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Chunk the corpus, extract mentions, build graph and index, save a snapshot
    Build,
    /// Retrieve evidence for one question
    Ask {
        question: String,
        /// vector, graphrag-local, heuristic or llm
        #[arg(long, default_value = "heuristic")]
        controller: String,
        /// Trace output path (default <out_dir>/traces/ask/<controller>.jsonl)
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
        /// Generate an answer over the evidence with the configured gateway
        #[arg(long)]
        answer: bool,
        /// Print the evidence list as JSON
        #[arg(long)]
        json: bool,
    },
    /// Evaluate the configured controllers on the question set
    Eval,
    /// Graph-health metrics and failure categories from a previous eval
    Diagnose {
        /// Report to read (default <out_dir>/report.json)
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
    /// Write the graph as line-oriented triples
    ExportTriples {
        /// Output path (default <out_dir>/triples.nt)
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
}

/// One flag per config key.
#[derive(Args, Debug, Default)]
struct ConfigFlags {
    /// Corpus JSONL path
    #[arg(long, global = true, value_name = "PATH")]
    corpus: Option<String>,
    /// Questions JSONL path
    #[arg(long, global = true, value_name = "PATH")]
    questions: Option<String>,
    /// Mention annotations JSONL path
    #[arg(long, global = true, value_name = "PATH")]
    annotations: Option<String>,
    /// Gazetteer JSON path (label -> etype)
    #[arg(long, global = true, value_name = "PATH")]
    gazetteer: Option<String>,
    /// Scripted gateway JSON path
    #[arg(long, global = true, value_name = "PATH")]
    script: Option<String>,
    /// Output directory [default: kgnav-out]
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<String>,
    /// Snapshot path [default: <out_dir>/snapshot.json]
    #[arg(long, global = true, value_name = "PATH")]
    snapshot: Option<String>,
    /// Controllers for eval, comma-separated [default: vector,graphrag-local,heuristic]
    #[arg(long, global = true, value_name = "LIST")]
    controllers: Option<String>,
    /// auto, reference or http [default: auto]
    #[arg(long, global = true, value_name = "KIND")]
    embedder: Option<String>,
    /// Embedding dimension [default: 256]
    #[arg(long, global = true, value_name = "N")]
    embedder_dim: Option<String>,
    /// HTTP embedder endpoint [default: $EMBEDDER_URL]
    #[arg(long, global = true, value_name = "URL")]
    embedder_url: Option<String>,
    /// auto, none, script or http [default: auto]
    #[arg(long, global = true, value_name = "KIND")]
    gateway: Option<String>,
    /// HTTP gateway endpoint [default: $LLM_URL]
    #[arg(long, global = true, value_name = "URL")]
    llm_url: Option<String>,
    /// HTTP gateway timeout in seconds [default: 120]
    #[arg(long, global = true, value_name = "SECS")]
    llm_timeout_s: Option<String>,
    /// Bootstrap RNG seed [default: 0]
    #[arg(long, global = true, value_name = "N")]
    bootstrap_seed: Option<String>,
    /// Bootstrap resamples [default: 10000]
    #[arg(long, global = true, value_name = "N")]
    bootstrap_resamples: Option<String>,
    /// Worker threads, 0 for all cores [default: 0]
    #[arg(long, global = true, value_name = "N")]
    parallelism: Option<String>,
    /// Chunk word budget [default: 240]
    #[arg(long, global = true, value_name = "N")]
    max_words: Option<String>,
    /// Words carried between windows of an oversized paragraph [default: 40]
    #[arg(long, global = true, value_name = "N")]
    overlap_words: Option<String>,
    /// Run the builtin capitalization-run extractor [default: true]
    #[arg(long, global = true, value_name = "BOOL")]
    builtin_ner: Option<String>,
    /// Record zero timings so traces and reports are byte-reproducible [default: false]
    #[arg(long, global = true, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    frozen_clock: Option<String>,
    /// Evidence budget per question [default: 20]
    #[arg(long, global = true, value_name = "N")]
    k: Option<String>,
    /// GraphRAG-local vector seeds [default: 8]
    #[arg(long, global = true, value_name = "N")]
    seed_k: Option<String>,
    /// GraphRAG-local entities expanded [default: 12]
    #[arg(long, global = true, value_name = "N")]
    expand_entities: Option<String>,
    /// GraphRAG-local chunks per expanded entity [default: 12]
    #[arg(long, global = true, value_name = "N")]
    per_entity_chunk_cap: Option<String>,
    /// Heuristic maximum BFS depth [default: 3]
    #[arg(long, global = true, value_name = "N")]
    bfs_depth: Option<String>,
    /// LLM loop turn budget [default: 25]
    #[arg(long, global = true, value_name = "N")]
    max_turns: Option<String>,
    /// Heuristic consecutive zero-yield iterations before stopping [default: 2]
    #[arg(long, global = true, value_name = "N")]
    stall_break_heuristic: Option<String>,
    /// LLM stalled turns before stopping, once half the budget is spent [default: 4]
    #[arg(long, global = true, value_name = "N")]
    stall_break_llm: Option<String>,
    /// Score bonus for explicitly collected chunks [default: 0.10]
    #[arg(long, global = true, value_name = "X")]
    boost: Option<String>,
    /// Score multiplier for backfilled chunks [default: 0.9]
    #[arg(long, global = true, value_name = "X")]
    backfill_discount: Option<String>,
    /// entity_search result cap [default: 10]
    #[arg(long, global = true, value_name = "N")]
    n_seed: Option<String>,
}

impl ConfigFlags {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let pairs: [(&'static str, &Option<String>); 32] = [
            ("corpus", &self.corpus),
            ("questions", &self.questions),
            ("annotations", &self.annotations),
            ("gazetteer", &self.gazetteer),
            ("script", &self.script),
            ("out_dir", &self.out_dir),
            ("snapshot", &self.snapshot),
            ("controllers", &self.controllers),
            ("embedder", &self.embedder),
            ("embedder_dim", &self.embedder_dim),
            ("embedder_url", &self.embedder_url),
            ("gateway", &self.gateway),
            ("llm_url", &self.llm_url),
            ("llm_timeout_s", &self.llm_timeout_s),
            ("bootstrap_seed", &self.bootstrap_seed),
            ("bootstrap_resamples", &self.bootstrap_resamples),
            ("parallelism", &self.parallelism),
            ("max_words", &self.max_words),
            ("overlap_words", &self.overlap_words),
            ("builtin_ner", &self.builtin_ner),
            ("frozen_clock", &self.frozen_clock),
            ("k", &self.k),
            ("seed_k", &self.seed_k),
            ("expand_entities", &self.expand_entities),
            ("per_entity_chunk_cap", &self.per_entity_chunk_cap),
            ("bfs_depth", &self.bfs_depth),
            ("max_turns", &self.max_turns),
            ("stall_break_heuristic", &self.stall_break_heuristic),
            ("stall_break_llm", &self.stall_break_llm),
            ("boost", &self.boost),
            ("backfill_discount", &self.backfill_discount),
            ("n_seed", &self.n_seed),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect()
    }
}

fn clock(cfg: &RunConfig) -> Clock {
    if cfg.frozen_clock {
        Clock::Frozen
    } else {
        Clock::Wall
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn build_engine(cfg: &RunConfig) -> Result<Engine> {
    let corpus = cfg
        .corpus
        .as_ref()
        .ok_or_else(|| Error::Usage("no corpus configured (--corpus)".into()))?;
    let docs = load_corpus(corpus)?;
    let annotations = match &cfg.annotations {
        Some(p) => load_annotations(p, &docs)?,
        None => Vec::new(),
    };
    let gazetteer = cfg.gazetteer.as_ref().map(Gazetteer::load).transpose()?;
    let opts = BuildOptions {
        max_words: cfg.max_words,
        overlap_words: cfg.overlap_words,
        builtin_ner: cfg.builtin_ner,
        gazetteer,
        annotations,
    };
    Engine::build(&docs, &opts, cfg.embedder_spec()?)
}

/// Load the snapshot when present, otherwise build in memory from the corpus.
fn open_engine(cfg: &RunConfig) -> Result<Engine> {
    let snap = cfg.snapshot_path();
    if snap.exists() {
        Engine::load(&snap)
    } else if cfg.corpus.is_some() {
        eprintln!("note: {} not found, building from the corpus", snap.display());
        build_engine(cfg)
    } else {
        Err(Error::Usage(format!(
            "no snapshot at {} and no corpus configured; run `kgnav build` first",
            snap.display()
        )))
    }
}

fn open_gateway(cfg: &RunConfig) -> Result<Option<Box<dyn Gateway>>> {
    Ok(match cfg.gateway_choice() {
        GatewayChoice::None | GatewayChoice::Auto => None,
        GatewayChoice::Script => {
            let path = cfg
                .script
                .as_ref()
                .ok_or_else(|| Error::Usage("gateway = script needs --script".into()))?;
            Some(Box::new(ScriptedGateway::load(path)?))
        }
        GatewayChoice::Http => {
            let url = cfg
                .llm_url()
                .ok_or_else(|| Error::Usage("gateway = http needs --llm-url or $LLM_URL".into()))?;
            let key = std::env::var("LLM_API_KEY").ok();
            Some(Box::new(HttpGateway::new(
                url,
                key,
                Duration::from_secs(cfg.llm_timeout_s),
            )?))
        }
    })
}

fn cmd_build(cfg: &RunConfig) -> Result<()> {
    let engine = build_engine(cfg)?;
    let path = cfg.snapshot_path();
    engine.save(&path)?;
    let s = engine.graph().stats();
    println!("documents            {}", s.documents);
    println!("chunks               {}", s.chunks);
    println!("entities             {}", s.entities);
    println!("mention links        {}", s.mention_links);
    println!("co-mention edges     {}", s.co_mention_edges);
    println!("entities per chunk   {:.2}", s.entities_per_chunk);
    println!("chunks with entity   {:.1}%", 100.0 * s.chunks_with_entity);
    println!("snapshot             {}", path.display());
    Ok(())
}

fn cmd_ask(
    cfg: &RunConfig,
    question: &str,
    controller: &str,
    trace: Option<PathBuf>,
    answer: bool,
    as_json: bool,
) -> Result<()> {
    let kind: ControllerKind = controller.parse()?;
    let engine = open_engine(cfg)?;
    let gateway = open_gateway(cfg)?;
    if (kind.needs_gateway() || answer) && gateway.is_none() {
        return Err(Error::Usage(
            "this request needs a gateway (--script or --llm-url)".into(),
        ));
    }
    let ctx = engine.context(gateway.as_deref(), cfg.controller.n_seed, clock(cfg));
    let run = run_controller(kind, None, question, ctx, &cfg.controller)?;
    let trace_path = trace.unwrap_or_else(|| cfg.out_dir.join("traces").join("ask").join(format!("{kind}.jsonl")));
    run.trace.write(&trace_path)?;

    let graph = engine.graph();
    let answer_text = match (&gateway, answer) {
        (Some(g), true) => {
            let mut passages = String::new();
            for item in &run.evidence.items {
                if let Some(c) = graph.chunk(&item.chunk_id) {
                    passages.push_str(&format!("[{}]\n{}\n\n", c.chunk_id, c.text));
                }
            }
            Some(g.oneshot(&sub_query_prompt(question, &passages))?)
        }
        _ => None,
    };

    if as_json {
        let v = json!({ "evidence": run.evidence, "answer": answer_text, "trace": trace_path });
        println!("{}", serde_json::to_string_pretty(&v)?);
        return Ok(());
    }
    println!("{:>3}  {:<7} {:<10} {:<24} document", "#", "score", "source", "chunk");
    for (i, item) in run.evidence.items.iter().enumerate() {
        let doc = graph
            .chunk(&item.chunk_id)
            .and_then(|c| graph.document(&c.doc_id))
            .map(|d| format!("{} ({})", d.doc_id, d.title))
            .unwrap_or_default();
        let source = serde_json::to_value(item.source)?;
        println!(
            "{:>3}  {:<7.4} {:<10} {:<24} {}",
            i + 1,
            item.score,
            source.as_str().unwrap_or(""),
            item.chunk_id,
            doc
        );
    }
    if let Some(e) = &run.evidence.error {
        println!("error: {e}");
    }
    println!(
        "tool calls {}  tokens {}  gateway tokens {}  {} ms",
        run.trace.tool_calls().count(),
        run.evidence.token_estimate,
        run.evidence.gateway_tokens,
        run.evidence.wall_ms
    );
    println!("trace {}", trace_path.display());
    if let Some(a) = answer_text {
        println!("\n{a}");
    }
    Ok(())
}

fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let qpath = cfg
        .questions
        .as_ref()
        .ok_or_else(|| Error::Usage("no questions configured (--questions)".into()))?;
    let questions = load_questions(qpath)?;
    let engine = open_engine(cfg)?;
    let gateway = open_gateway(cfg)?;
    let ctx = engine.context(gateway.as_deref(), cfg.controller.n_seed, clock(cfg));
    let opts = EvalOptions {
        controllers: cfg.controllers.clone(),
        config: cfg.controller.clone(),
        bootstrap_resamples: cfg.bootstrap_resamples,
        bootstrap_seed: cfg.bootstrap_seed,
        parallelism: cfg.parallelism,
        clock: clock(cfg),
    };
    let outcome = run_eval(&questions, ctx, &opts)?;
    outcome.report.write(&cfg.out_dir, &outcome.traces)?;
    print!("{}", outcome.report.render_tables());
    println!("\nreport {}", cfg.out_dir.join("report.json").display());
    Ok(())
}

fn cmd_diagnose(cfg: &RunConfig, report: Option<PathBuf>) -> Result<()> {
    let report_path = report.unwrap_or_else(|| cfg.out_dir.join("report.json"));
    let report = EvalReport::read(&report_path)?;
    let base = report_path.parent().unwrap_or(Path::new("."));
    let trace_dir = base.join("traces");
    if !trace_dir.is_dir() {
        return Err(Error::Validation(format!(
            "trace directory {} not found",
            trace_dir.display()
        )));
    }
    let engine = open_engine(cfg)?;
    let graph = engine.graph();
    let n_seed = report.options.config.n_seed;

    let mut traces = BTreeMap::new();
    for r in &report.records {
        let p = base.join(&r.trace_ref);
        if p.exists() {
            traces.insert(r.trace_ref.clone(), Trace::read(&p)?);
        }
    }
    let health: Vec<_> = report
        .options
        .controllers
        .iter()
        .map(|c| compute_kg_health(c.as_str(), &report.records, &traces, graph, &report.questions, n_seed))
        .collect();
    let failures = categorize_failures(&report.records, graph, &report.questions, n_seed);

    write_file(
        &cfg.out_dir.join("health.json"),
        &serde_json::to_string_pretty(&health)?,
    )?;
    write_file(
        &cfg.out_dir.join("failures.json"),
        &serde_json::to_string_pretty(&failures)?,
    )?;

    let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    println!(
        "{:<16} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "controller", "n", "seedhit", "reach@1", "reach@2", "reach@3", "hop_eff", "noise", "backfill", "redund"
    );
    for h in &health {
        let r = |k: usize| fmt(h.reachability_at_h.get(&k).copied());
        println!(
            "{:<16} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            h.controller,
            h.questions,
            fmt(h.seed_hit_rate),
            r(1),
            r(2),
            r(3),
            fmt(h.hop_efficiency),
            fmt(h.neighborhood_noise),
            fmt(h.backfill_reliance),
            fmt(h.evidence_redundancy)
        );
        for w in &h.warnings {
            eprintln!("warning: {}: {w}", h.controller);
        }
    }
    println!("\nfailures ({} question-controller pairs)", failures.len());
    for f in &failures {
        let cats: Vec<String> = f
            .categories
            .iter()
            .map(|c| {
                serde_json::to_value(c)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default()
            })
            .collect();
        println!(
            "{:<16} {:<12} {:<28} {}",
            f.controller,
            f.qid,
            cats.join(","),
            f.reasons.join("; ")
        );
    }
    Ok(())
}

fn cmd_export(cfg: &RunConfig, output: Option<PathBuf>) -> Result<()> {
    let engine = open_engine(cfg)?;
    let path = output.unwrap_or_else(|| cfg.out_dir.join("triples.nt"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    engine.graph().export_triples(&path)?;
    println!(
        "{} triples written to {}",
        engine.graph().triples().len(),
        path.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(cli.flags.overrides())?;
    cfg.check_paths()?;
    match cli.command {
        Command::Build => cmd_build(&cfg),
        Command::Ask {
            question,
            controller,
            trace,
            answer,
            json,
        } => cmd_ask(&cfg, &question, &controller, trace, answer, json),
        Command::Eval => cmd_eval(&cfg),
        Command::Diagnose { report } => cmd_diagnose(&cfg, report),
        Command::ExportTriples { output } => cmd_export(&cfg, output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
