//! Bipartite chunk/entity mention graph with materialized co-mention adjacency.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::io::Write;
use std::path::Path;

use percent_encoding::{utf8_percent_encode, AsciiSet, CONTROLS};
use serde::{Deserialize, Serialize};

use crate::corpus::{Chunk, Document};
use crate::entity::{entity_uri, Entity, EntityType, LabelIndex, MentionSpan};
use crate::error::{Error, Result};
use crate::fuzzy::normalize_label;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentInfo {
    pub doc_id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighbor {
    pub neighbor_uri: String,
    pub label: String,
    pub shared_chunks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Adjacent {
    entity: usize,
    shared: usize,
}

/// Persisted form of the graph; everything else is derived on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphData {
    documents: Vec<DocumentInfo>,
    chunks: Vec<Chunk>,
    entities: Vec<Entity>,
    /// (chunk index, entity index), sorted
    mentions: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "GraphData", try_from = "GraphData")]
pub struct MentionGraph {
    documents: Vec<DocumentInfo>,
    chunks: Vec<Chunk>,
    entities: Vec<Entity>,
    mentions: Vec<(usize, usize)>,
    doc_pos: HashMap<String, usize>,
    chunk_pos: HashMap<String, usize>,
    entity_pos: HashMap<String, usize>,
    chunk_entities: Vec<Vec<usize>>,
    entity_chunks: Vec<Vec<usize>>,
    adjacency: Vec<Vec<Adjacent>>,
    label_index: LabelIndex,
}

impl PartialEq for MentionGraph {
    fn eq(&self, other: &Self) -> bool {
        self.documents == other.documents
            && self.chunks == other.chunks
            && self.entities == other.entities
            && self.mentions == other.mentions
    }
}

impl From<MentionGraph> for GraphData {
    fn from(g: MentionGraph) -> Self {
        GraphData {
            documents: g.documents,
            chunks: g.chunks,
            entities: g.entities,
            mentions: g.mentions,
        }
    }
}

impl TryFrom<GraphData> for MentionGraph {
    type Error = Error;

    fn try_from(d: GraphData) -> Result<Self> {
        for &(c, e) in &d.mentions {
            if c >= d.chunks.len() || e >= d.entities.len() {
                return Err(Error::Validation(format!("mention edge ({c}, {e}) out of range")));
            }
        }
        Ok(MentionGraph::assemble(d.documents, d.chunks, d.entities, d.mentions))
    }
}

/// Summary figures printed after a build.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub documents: usize,
    pub chunks: usize,
    pub entities: usize,
    pub mention_links: usize,
    pub co_mention_edges: usize,
    pub entities_per_chunk: f64,
    pub chunks_with_entity: f64,
}

impl MentionGraph {
    /// Build from chunked documents and validated spans. Each span is assigned
    /// to every chunk of its document whose `[start_char, end_char)` contains
    /// the span start.
    pub fn build(docs: &[Document], chunks: &[Chunk], spans: &[MentionSpan]) -> Result<Self> {
        let documents: Vec<DocumentInfo> = docs
            .iter()
            .map(|d| DocumentInfo {
                doc_id: d.doc_id.clone(),
                title: d.title.clone(),
            })
            .collect();
        let known_docs: BTreeSet<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();

        let mut chunks = chunks.to_vec();
        chunks.sort_by(|a, b| a.doc_id.cmp(&b.doc_id).then(a.seq.cmp(&b.seq)));
        let mut by_doc: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, c) in chunks.iter().enumerate() {
            if !known_docs.contains(c.doc_id.as_str()) {
                return Err(Error::Validation(format!(
                    "chunk {} references unknown doc_id {:?}",
                    c.chunk_id, c.doc_id
                )));
            }
            by_doc.entry(c.doc_id.as_str()).or_default().push(i);
        }

        // (normalized label, type) -> surface form counts
        let mut surfaces: BTreeMap<(String, EntityType), BTreeMap<&str, usize>> = BTreeMap::new();
        let mut edges: BTreeSet<(usize, (String, EntityType))> = BTreeSet::new();
        for span in spans {
            let key = (normalize_label(&span.label), span.etype);
            if key.0.is_empty() {
                return Err(Error::Validation(format!(
                    "empty label at {}[{}..{}]",
                    span.doc_id, span.start_char, span.end_char
                )));
            }
            let candidates = by_doc.get(span.doc_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            let mut hit = false;
            for &ci in candidates {
                let c = &chunks[ci];
                if c.start_char <= span.start_char && span.start_char < c.end_char {
                    edges.insert((ci, key.clone()));
                    hit = true;
                }
            }
            if !hit {
                return Err(Error::Validation(format!(
                    "span {:?} at {}[{}..{}] falls in no chunk",
                    span.label, span.doc_id, span.start_char, span.end_char
                )));
            }
            *surfaces.entry(key).or_default().entry(&span.label).or_default() += 1;
        }

        let mut entities: Vec<Entity> = surfaces
            .iter()
            .map(|((norm, etype), forms)| {
                // most frequent surface form, ties to the lexicographically smallest
                let label = forms
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                    .map(|(l, _)| l.to_string())
                    .unwrap_or_else(|| norm.clone());
                Entity {
                    entity_uri: entity_uri(norm, *etype),
                    label,
                    etype: *etype,
                    chunk_count: 0,
                }
            })
            .collect();
        entities.sort_by(|a, b| a.entity_uri.cmp(&b.entity_uri));
        let key_pos: HashMap<String, usize> = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.entity_uri.clone(), i))
            .collect();

        let mut mentions: Vec<(usize, usize)> = edges
            .into_iter()
            .map(|(ci, (norm, etype))| (ci, key_pos[&entity_uri(&norm, etype)]))
            .collect();
        mentions.sort_unstable();
        mentions.dedup();

        Ok(Self::assemble(documents, chunks, entities, mentions))
    }

    fn assemble(
        documents: Vec<DocumentInfo>,
        chunks: Vec<Chunk>,
        mut entities: Vec<Entity>,
        mentions: Vec<(usize, usize)>,
    ) -> Self {
        let mut chunk_entities = vec![Vec::new(); chunks.len()];
        let mut entity_chunks = vec![Vec::new(); entities.len()];
        for &(c, e) in &mentions {
            chunk_entities[c].push(e);
            entity_chunks[e].push(c);
        }
        for v in chunk_entities.iter_mut().chain(entity_chunks.iter_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        for (e, cs) in entities.iter_mut().zip(&entity_chunks) {
            e.chunk_count = cs.len();
        }

        let mut pair_counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for ents in &chunk_entities {
            for (i, &a) in ents.iter().enumerate() {
                for &b in &ents[i + 1..] {
                    *pair_counts.entry((a, b)).or_default() += 1;
                }
            }
        }
        let norms: Vec<String> = entities.iter().map(|e| normalize_label(&e.label)).collect();
        let mut adjacency = vec![Vec::new(); entities.len()];
        for (&(a, b), &shared) in &pair_counts {
            adjacency[a].push(Adjacent { entity: b, shared });
            adjacency[b].push(Adjacent { entity: a, shared });
        }
        for list in &mut adjacency {
            list.sort_by(|x, y| {
                y.shared
                    .cmp(&x.shared)
                    .then_with(|| norms[x.entity].cmp(&norms[y.entity]))
                    .then_with(|| x.entity.cmp(&y.entity))
            });
        }

        let mut label_index = LabelIndex::default();
        for e in &entities {
            label_index.insert(&e.label, &e.entity_uri);
        }

        MentionGraph {
            doc_pos: documents
                .iter()
                .enumerate()
                .map(|(i, d)| (d.doc_id.clone(), i))
                .collect(),
            chunk_pos: chunks
                .iter()
                .enumerate()
                .map(|(i, c)| (c.chunk_id.clone(), i))
                .collect(),
            entity_pos: entities
                .iter()
                .enumerate()
                .map(|(i, e)| (e.entity_uri.clone(), i))
                .collect(),
            documents,
            chunks,
            entities,
            mentions,
            chunk_entities,
            entity_chunks,
            adjacency,
            label_index,
        }
    }

    pub fn documents(&self) -> &[DocumentInfo] {
        &self.documents
    }

    pub fn document(&self, doc_id: &str) -> Option<&DocumentInfo> {
        self.doc_pos.get(doc_id).map(|&i| &self.documents[i])
    }

    /// Chunks in `(doc_id, seq)` order.
    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.chunk_pos.get(chunk_id).map(|&i| &self.chunks[i])
    }

    /// Entities in URI order.
    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn entity(&self, uri: &str) -> Option<&Entity> {
        self.entity_pos.get(uri).map(|&i| &self.entities[i])
    }

    pub fn label_index(&self) -> &LabelIndex {
        &self.label_index
    }

    /// `(chunk_id, entity_uri)` pairs in chunk order.
    pub fn mentions(&self) -> impl Iterator<Item = (&str, &str)> {
        self.mentions
            .iter()
            .map(|&(c, e)| (self.chunks[c].chunk_id.as_str(), self.entities[e].entity_uri.as_str()))
    }

    fn entity_idx(&self, uri: &str) -> Result<usize> {
        self.entity_pos
            .get(uri)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("entity {uri}")))
    }

    /// Chunk ids mentioning the entity, ordered by `(doc_id, seq)`.
    pub fn chunks_for_entity(&self, uri: &str) -> Result<Vec<&str>> {
        let e = self.entity_idx(uri)?;
        Ok(self.entity_chunks[e]
            .iter()
            .map(|&c| self.chunks[c].chunk_id.as_str())
            .collect())
    }

    /// Entities mentioned in a chunk, in URI order.
    pub fn entities_for_chunk(&self, chunk_id: &str) -> Result<Vec<&Entity>> {
        let c = self
            .chunk_pos
            .get(chunk_id)
            .ok_or_else(|| Error::NotFound(format!("chunk {chunk_id}")))?;
        Ok(self.chunk_entities[*c].iter().map(|&e| &self.entities[e]).collect())
    }

    /// Co-mentioned entities, most shared chunks first, then by normalized label.
    pub fn co_mention_neighbors(&self, uri: &str) -> Result<Vec<Neighbor>> {
        let e = self.entity_idx(uri)?;
        Ok(self.adjacency[e]
            .iter()
            .map(|a| {
                let n = &self.entities[a.entity];
                Neighbor {
                    neighbor_uri: n.entity_uri.clone(),
                    label: n.label.clone(),
                    shared_chunks: a.shared,
                }
            })
            .collect())
    }

    /// Entities within `h` co-mention hops of any known seed (seeds are hop 0).
    pub fn entities_within(&self, seeds: &[&str], h: usize) -> BTreeSet<usize> {
        let mut dist: HashMap<usize, usize> = HashMap::new();
        let mut queue = VecDeque::new();
        for s in seeds {
            if let Some(&i) = self.entity_pos.get(*s) {
                if dist.insert(i, 0).is_none() {
                    queue.push_back(i);
                }
            }
        }
        while let Some(e) = queue.pop_front() {
            let d = dist[&e];
            if d == h {
                continue;
            }
            for a in &self.adjacency[e] {
                if let Entry::Vacant(slot) = dist.entry(a.entity) {
                    slot.insert(d + 1);
                    queue.push_back(a.entity);
                }
            }
        }
        dist.into_keys().collect()
    }

    /// `(reachable, total)` gold chunks: a gold chunk is reachable when it
    /// mentions an entity within `h` hops of a seed. Unknown chunk ids count
    /// toward the total but are never reachable.
    pub fn reachable_gold(&self, seeds: &[&str], gold: &BTreeSet<String>, h: usize) -> (usize, usize) {
        let reach = self.entities_within(seeds, h);
        let hit = gold
            .iter()
            .filter(|g| {
                self.chunk_pos
                    .get(g.as_str())
                    .is_some_and(|&c| self.chunk_entities[c].iter().any(|e| reach.contains(e)))
            })
            .count();
        (hit, gold.len())
    }

    /// Fraction of gold chunks reachable within `h` hops; 1.0 for an empty gold set.
    pub fn reachability_at_h(&self, seeds: &[&str], gold: &BTreeSet<String>, h: usize) -> f64 {
        let (hit, total) = self.reachable_gold(seeds, gold, h);
        if total == 0 {
            1.0
        } else {
            hit as f64 / total as f64
        }
    }

    pub fn stats(&self) -> GraphStats {
        let n = self.chunks.len();
        GraphStats {
            documents: self.documents.len(),
            chunks: n,
            entities: self.entities.len(),
            mention_links: self.mentions.len(),
            co_mention_edges: self.adjacency.iter().map(Vec::len).sum::<usize>() / 2,
            entities_per_chunk: if n == 0 {
                0.0
            } else {
                self.mentions.len() as f64 / n as f64
            },
            chunks_with_entity: if n == 0 {
                0.0
            } else {
                self.chunk_entities.iter().filter(|v| !v.is_empty()).count() as f64 / n as f64
            },
        }
    }

    /// Triples as `(subject, predicate, object)` with objects already in
    /// their serialized form (`<iri>` or `"literal"`), sorted.
    pub fn triples(&self) -> Vec<(String, &'static str, String)> {
        let mut out = Vec::new();
        for d in &self.documents {
            out.push((d.doc_id.clone(), "label", literal(&d.title)));
        }
        for c in &self.chunks {
            out.push((c.chunk_id.clone(), "isChunkOf", iri(&c.doc_id)));
        }
        for (c, e) in self.mentions() {
            out.push((c.to_string(), "mentions", iri(e)));
        }
        for e in &self.entities {
            out.push((e.entity_uri.clone(), "label", literal(&e.label)));
            out.push((e.entity_uri.clone(), "type", iri(e.etype.as_str())));
        }
        out.sort();
        out
    }

    /// Write `<s> <p> <o> .` lines, one triple per line, in sorted order.
    pub fn export_triples(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        for (s, p, o) in self.triples() {
            writeln!(buf, "{} <{}> {} .", iri(&s), p, o).expect("write to Vec");
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

const IRI_ESCAPE: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'<')
    .add(b'>')
    .add(b'"')
    .add(b'{')
    .add(b'}')
    .add(b'|')
    .add(b'\\')
    .add(b'^')
    .add(b'`');

fn iri(s: &str) -> String {
    format!("<{}>", utf8_percent_encode(s, IRI_ESCAPE))
}

fn literal(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
