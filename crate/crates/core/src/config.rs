//! Run configuration: a `key = value` text file whose every key can also be
//! set from the command line.
//!
//! ```text
//! # kgnav.conf
//! corpus = data/corpus.jsonl
//! questions = data/questions.jsonl
//! out_dir = runs/baseline
//! controllers = vector, graphrag-local, heuristic
//! k = 20
//! bootstrap_seed = 7
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths in a
//! file resolve against the file's directory. Unknown keys are errors.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controllers::{ControllerConfig, ControllerKind};
use crate::corpus::{DEFAULT_MAX_WORDS, DEFAULT_OVERLAP_WORDS};
use crate::engine::EmbedderSpec;
use crate::error::{Error, Result};
use crate::eval::DEFAULT_RESAMPLES;
use crate::vector::DEFAULT_DIM;

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("corpus", "corpus JSONL path"),
    ("questions", "questions JSONL path"),
    ("annotations", "mention annotations JSONL path"),
    ("gazetteer", "gazetteer JSON path (label -> etype)"),
    ("script", "scripted gateway JSON path"),
    ("out_dir", "output directory"),
    ("snapshot", "snapshot path (default <out_dir>/snapshot.json)"),
    ("controllers", "comma-separated controllers for eval"),
    ("embedder", "auto | reference | http"),
    ("embedder_dim", "embedding dimension"),
    ("embedder_url", "HTTP embedder endpoint (default $EMBEDDER_URL)"),
    ("gateway", "auto | none | script | http"),
    ("llm_url", "HTTP gateway endpoint (default $LLM_URL)"),
    ("llm_timeout_s", "HTTP gateway timeout in seconds"),
    ("bootstrap_seed", "bootstrap RNG seed"),
    ("bootstrap_resamples", "bootstrap resample count"),
    ("parallelism", "worker threads, 0 for all cores"),
    ("max_words", "chunk word budget"),
    ("overlap_words", "overlap carried between word windows"),
    ("builtin_ner", "run the builtin extractor (true/false)"),
    ("frozen_clock", "record zero timings for reproducible output"),
    ("k", "evidence budget"),
    ("seed_k", "graphrag-local vector seeds"),
    ("expand_entities", "graphrag-local expanded entities"),
    ("per_entity_chunk_cap", "graphrag-local chunks per entity"),
    ("bfs_depth", "heuristic maximum depth"),
    ("max_turns", "llm turn budget"),
    ("stall_break_heuristic", "heuristic consecutive zero-yield limit"),
    ("stall_break_llm", "llm consecutive stalled-turn limit"),
    ("boost", "score bonus for collected chunks"),
    ("backfill_discount", "score multiplier for backfilled chunks"),
    ("n_seed", "entity_search result cap"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderChoice {
    #[default]
    Auto,
    Reference,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayChoice {
    #[default]
    Auto,
    None,
    Script,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub script: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub snapshot: Option<PathBuf>,
    pub controllers: Vec<ControllerKind>,
    pub embedder: EmbedderChoice,
    pub embedder_dim: usize,
    pub embedder_url: Option<String>,
    pub gateway: GatewayChoice,
    pub llm_url: Option<String>,
    pub llm_timeout_s: u64,
    pub bootstrap_seed: u64,
    pub bootstrap_resamples: usize,
    pub parallelism: usize,
    pub max_words: usize,
    pub overlap_words: usize,
    pub builtin_ner: bool,
    pub frozen_clock: bool,
    pub controller: ControllerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            questions: None,
            annotations: None,
            gazetteer: None,
            script: None,
            out_dir: PathBuf::from("kgnav-out"),
            snapshot: None,
            controllers: vec![
                ControllerKind::VectorOnly,
                ControllerKind::GraphragLocal,
                ControllerKind::HeuristicRlm,
            ],
            embedder: EmbedderChoice::Auto,
            embedder_dim: DEFAULT_DIM,
            embedder_url: None,
            gateway: GatewayChoice::Auto,
            llm_url: None,
            llm_timeout_s: 120,
            bootstrap_seed: 0,
            bootstrap_resamples: DEFAULT_RESAMPLES,
            parallelism: 0,
            max_words: DEFAULT_MAX_WORDS,
            overlap_words: DEFAULT_OVERLAP_WORDS,
            builtin_ner: true,
            frozen_clock: false,
            controller: ControllerConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| format!("invalid value {value:?} for {key}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("invalid value {value:?} for {key}: expected true or false")),
    }
}

fn non_empty(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

impl RunConfig {
    /// Set one key. `base` resolves relative paths; `None` leaves them as given.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> std::result::Result<(), String> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let path = |v: &str| -> Option<PathBuf> {
            if v.is_empty() {
                return None;
            }
            let p = PathBuf::from(v);
            Some(match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            })
        };
        let c = &mut self.controller;
        match key.as_str() {
            "corpus" => self.corpus = path(value),
            "questions" => self.questions = path(value),
            "annotations" => self.annotations = path(value),
            "gazetteer" => self.gazetteer = path(value),
            "script" => self.script = path(value),
            "out_dir" => self.out_dir = path(value).ok_or("out_dir must not be empty")?,
            "snapshot" => self.snapshot = path(value),
            "controllers" => {
                self.controllers = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<ControllerKind>().map_err(|e| e.to_string()))
                    .collect::<std::result::Result<_, _>>()?;
                self.controllers.dedup();
            }
            "embedder" => {
                self.embedder = match value {
                    "auto" => EmbedderChoice::Auto,
                    "reference" => EmbedderChoice::Reference,
                    "http" => EmbedderChoice::Http,
                    _ => return Err(format!("invalid embedder {value:?}: expected auto, reference or http")),
                }
            }
            "embedder_dim" => self.embedder_dim = parse(&key, value)?,
            "embedder_url" => self.embedder_url = non_empty(value),
            "gateway" => {
                self.gateway = match value {
                    "auto" => GatewayChoice::Auto,
                    "none" => GatewayChoice::None,
                    "script" => GatewayChoice::Script,
                    "http" => GatewayChoice::Http,
                    _ => {
                        return Err(format!(
                            "invalid gateway {value:?}: expected auto, none, script or http"
                        ))
                    }
                }
            }
            "llm_url" => self.llm_url = non_empty(value),
            "llm_timeout_s" => self.llm_timeout_s = parse(&key, value)?,
            "bootstrap_seed" => self.bootstrap_seed = parse(&key, value)?,
            "bootstrap_resamples" => self.bootstrap_resamples = parse(&key, value)?,
            "parallelism" => self.parallelism = parse(&key, value)?,
            "max_words" => self.max_words = parse(&key, value)?,
            "overlap_words" => self.overlap_words = parse(&key, value)?,
            "builtin_ner" => self.builtin_ner = parse_bool(&key, value)?,
            "frozen_clock" => self.frozen_clock = parse_bool(&key, value)?,
            "k" => c.k = parse(&key, value)?,
            "seed_k" => c.seed_k = parse(&key, value)?,
            "expand_entities" => c.expand_entities = parse(&key, value)?,
            "per_entity_chunk_cap" => c.per_entity_chunk_cap = parse(&key, value)?,
            "bfs_depth" => c.bfs_depth = parse(&key, value)?,
            "max_turns" => c.max_turns = parse(&key, value)?,
            "stall_break_heuristic" => c.stall_break_heuristic = parse(&key, value)?,
            "stall_break_llm" => c.stall_break_llm = parse(&key, value)?,
            "boost" => c.boost = parse(&key, value)?,
            "backfill_discount" => c.backfill_discount = parse(&key, value)?,
            "n_seed" => c.n_seed = parse(&key, value)?,
            _ => return Err(format!("unknown config key {key:?}")),
        }
        Ok(())
    }

    pub fn parse_str(&mut self, text: &str, source: &Path, base: Option<&Path>) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: source.to_path_buf(),
                line: i + 1,
                message,
            };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
            self.set(key, value, base).map_err(err)?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.parse_str(&text, path, path.parent())?;
        Ok(cfg)
    }

    /// Apply `key=value` overrides from the command line.
    pub fn apply_overrides<'a>(&mut self, overrides: impl IntoIterator<Item = (&'a str, String)>) -> Result<()> {
        for (k, v) in overrides {
            self.set(k, &v, None).map_err(Error::Usage)?;
        }
        Ok(())
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.snapshot
            .clone()
            .unwrap_or_else(|| self.out_dir.join("snapshot.json"))
    }

    /// Input files that are set must exist.
    pub fn check_paths(&self) -> Result<()> {
        let inputs = [
            ("corpus", &self.corpus),
            ("questions", &self.questions),
            ("annotations", &self.annotations),
            ("gazetteer", &self.gazetteer),
            ("script", &self.script),
        ];
        for (name, p) in inputs {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::Validation(format!("{name} path {} does not exist", p.display())));
                }
            }
        }
        self.controller.validate()
    }

    pub fn embedder_spec(&self) -> Result<EmbedderSpec> {
        let url = self
            .embedder_url
            .clone()
            .or_else(|| std::env::var("EMBEDDER_URL").ok().filter(|u| !u.is_empty()));
        let dim = self.embedder_dim;
        match (self.embedder, url) {
            (EmbedderChoice::Reference, _) | (EmbedderChoice::Auto, None) => Ok(EmbedderSpec::Reference { dim }),
            (EmbedderChoice::Http, Some(url)) | (EmbedderChoice::Auto, Some(url)) => {
                Ok(EmbedderSpec::Http { url, dim })
            }
            (EmbedderChoice::Http, None) => Err(Error::Usage(
                "embedder = http needs embedder_url or $EMBEDDER_URL".into(),
            )),
        }
    }

    /// Resolve `gateway = auto`: a script wins, then `$LLM_URL`/`llm_url`, else none.
    pub fn gateway_choice(&self) -> GatewayChoice {
        match self.gateway {
            GatewayChoice::Auto if self.script.is_some() => GatewayChoice::Script,
            GatewayChoice::Auto if self.llm_url().is_some() => GatewayChoice::Http,
            GatewayChoice::Auto => GatewayChoice::None,
            other => other,
        }
    }

    pub fn llm_url(&self) -> Option<String> {
        self.llm_url
            .clone()
            .or_else(|| std::env::var("LLM_URL").ok().filter(|u| !u.is_empty()))
    }
}
