//! Offline build of graph plus index, and the on-disk snapshot.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{chunk_corpus, Document, DEFAULT_MAX_WORDS, DEFAULT_OVERLAP_WORDS};
use crate::entity::{extract_corpus, Gazetteer, MentionSpan};
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::graph::MentionGraph;
use crate::tools::{Clock, ToolContext};
use crate::vector::{Embedder, HttpEmbedder, ReferenceEmbedder, VectorIndex};

pub const SNAPSHOT_VERSION: &str = "kgnav-snapshot/1";
const EMBED_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    Reference { dim: usize },
    Http { url: String, dim: usize },
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::Reference {
            dim: crate::vector::DEFAULT_DIM,
        }
    }
}

impl EmbedderSpec {
    pub fn dim(&self) -> usize {
        match self {
            EmbedderSpec::Reference { dim } | EmbedderSpec::Http { dim, .. } => *dim,
        }
    }

    pub fn instantiate(&self) -> Result<Box<dyn Embedder>> {
        match self {
            EmbedderSpec::Reference { dim } => {
                if *dim < 8 {
                    return Err(Error::Validation(format!(
                        "reference embedder needs dim >= 8, got {dim}"
                    )));
                }
                Ok(Box::new(ReferenceEmbedder::new(*dim)))
            }
            EmbedderSpec::Http { url, dim } => Ok(Box::new(HttpEmbedder::new(url.clone(), *dim)?)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub max_words: usize,
    pub overlap_words: usize,
    /// Run the capitalization-run extractor over the corpus.
    pub builtin_ner: bool,
    pub gazetteer: Option<Gazetteer>,
    /// Externally supplied mention spans, already validated against the corpus.
    pub annotations: Vec<MentionSpan>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            max_words: DEFAULT_MAX_WORDS,
            overlap_words: DEFAULT_OVERLAP_WORDS,
            builtin_ner: true,
            gazetteer: None,
            annotations: Vec::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: String,
    embedder: EmbedderSpec,
    graph: MentionGraph,
    index: VectorIndex,
}

/// A built mention graph, its chunk index, and the embedder that produced it.
pub struct Engine {
    graph: MentionGraph,
    index: VectorIndex,
    embedder: Box<dyn Embedder>,
    spec: EmbedderSpec,
}

impl Engine {
    /// Chunk, extract mentions, build the graph, embed every chunk.
    pub fn build(docs: &[Document], opts: &BuildOptions, spec: EmbedderSpec) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::Validation("corpus is empty".into()));
        }
        if opts.max_words <= opts.overlap_words {
            return Err(Error::Validation(format!(
                "max_words ({}) must exceed overlap_words ({})",
                opts.max_words, opts.overlap_words
            )));
        }
        let chunks = chunk_corpus(docs, opts.max_words, opts.overlap_words);
        let mut spans = opts.annotations.clone();
        if opts.builtin_ner {
            spans.extend(extract_corpus(docs, opts.gazetteer.as_ref()));
        }
        spans.sort_by(|a, b| {
            (&a.doc_id, a.start_char, a.end_char, &a.label, a.etype.as_str()).cmp(&(
                &b.doc_id,
                b.start_char,
                b.end_char,
                &b.label,
                b.etype.as_str(),
            ))
        });
        spans.dedup();
        let graph = MentionGraph::build(docs, &chunks, &spans)?;

        let embedder = spec.instantiate()?;
        let mut index = VectorIndex::new(embedder.dim());
        for batch in graph.chunks().chunks(EMBED_BATCH) {
            let texts: Vec<&str> = batch.iter().map(|c| c.text.as_str()).collect();
            let embs = embedder.embed_batch(&texts)?;
            for (c, e) in batch.iter().zip(embs) {
                index.upsert(&c.chunk_id, e)?;
            }
        }
        Ok(Self {
            graph,
            index,
            embedder,
            spec,
        })
    }

    pub fn graph(&self) -> &MentionGraph {
        &self.graph
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    pub fn embedder_spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    pub fn context<'a>(&'a self, gateway: Option<&'a dyn Gateway>, n_seed: usize, clock: Clock) -> ToolContext<'a> {
        ToolContext {
            graph: &self.graph,
            index: &self.index,
            embedder: self.embedder.as_ref(),
            gateway,
            n_seed,
            clock,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct SnapshotRef<'a> {
            version: &'a str,
            embedder: &'a EmbedderSpec,
            graph: &'a MentionGraph,
            index: &'a VectorIndex,
        }
        Ok(serde_json::to_string(&SnapshotRef {
            version: SNAPSHOT_VERSION,
            embedder: &self.spec,
            graph: &self.graph,
            index: &self.index,
        })?)
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let snap: Snapshot = serde_json::from_str(raw)?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Validation(format!(
                "snapshot version {:?}, expected {SNAPSHOT_VERSION:?}",
                snap.version
            )));
        }
        if snap.index.dim() != snap.embedder.dim() {
            return Err(Error::Dimension {
                expected: snap.embedder.dim(),
                got: snap.index.dim(),
            });
        }
        let embedder = snap.embedder.instantiate()?;
        Ok(Self {
            graph: snap.graph,
            index: snap.index,
            embedder,
            spec: snap.embedder,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw).map_err(|e| match e {
            Error::Json(j) => Error::Parse {
                path: path.to_path_buf(),
                line: j.line(),
                message: j.to_string(),
            },
            other => other,
        })
    }
}
