//! Typed entity mentions, the label index, and seed-entity search.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};

use crate::corpus::{char_slice, Document};
use crate::error::{Error, Result};
use crate::fuzzy::{normalize_label, partial_fuzzy_score};
use crate::graph::MentionGraph;

pub const FUZZY_THRESHOLD: u8 = 90;
pub const FUZZY_TOP_K: usize = 20;
pub const EXACT_HITS_BEFORE_FUZZY: usize = 3;
pub const DEFAULT_N_SEED: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityType {
    #[serde(rename = "PERSON")]
    Person,
    #[serde(rename = "ORG")]
    Org,
    #[serde(rename = "GPE")]
    Gpe,
    #[serde(rename = "LOC")]
    Loc,
}

impl EntityType {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Person => "PERSON",
            EntityType::Org => "ORG",
            EntityType::Gpe => "GPE",
            EntityType::Loc => "LOC",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PERSON" => Ok(EntityType::Person),
            "ORG" => Ok(EntityType::Org),
            "GPE" => Ok(EntityType::Gpe),
            "LOC" => Ok(EntityType::Loc),
            other => Err(Error::Validation(format!(
                "unknown entity type {other:?} (expected PERSON, ORG, GPE or LOC)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub entity_uri: String,
    pub label: String,
    pub etype: EntityType,
    pub chunk_count: usize,
}

/// A typed mention in document coordinates (char offsets).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionSpan {
    pub doc_id: String,
    pub start_char: usize,
    pub end_char: usize,
    pub label: String,
    pub etype: EntityType,
}

/// Normalized label -> entity URIs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelIndex {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl LabelIndex {
    pub fn insert(&mut self, label: &str, uri: &str) {
        self.map
            .entry(normalize_label(label))
            .or_default()
            .insert(uri.to_string());
    }

    /// Case- and whitespace-insensitive exact lookup.
    pub fn lookup(&self, label: &str) -> impl Iterator<Item = &str> {
        self.map
            .get(&normalize_label(label))
            .into_iter()
            .flat_map(|s| s.iter().map(String::as_str))
    }

    pub fn labels(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Normalized label -> type override for the builtin extractor.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer(HashMap<String, EntityType>);

impl Gazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: &str, etype: EntityType) {
        self.0.insert(normalize_label(label), etype);
    }

    pub fn get(&self, label: &str) -> Option<EntityType> {
        self.0.get(&normalize_label(label)).copied()
    }

    /// Load a flat JSON object `{label: etype}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let obj: BTreeMap<String, String> = serde_json::from_str(&raw).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let mut g = Gazetteer::new();
        for (label, etype) in obj {
            g.insert(&label, etype.parse()?);
        }
        Ok(g)
    }
}

pub fn entity_uri(label: &str, etype: EntityType) -> String {
    let norm = normalize_label(label);
    format!(
        "urn:kgnav:entity:{}:{}",
        etype,
        utf8_percent_encode(&norm, NON_ALPHANUMERIC)
    )
}

struct Token {
    start: usize,
    end: usize,
    capitalized: bool,
    lead_cut: bool,
    trail_cut: bool,
    paragraph_before: bool,
}

fn tokens(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut newlines = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            if chars[i] == '\n' {
                newlines += 1;
            }
            i += 1;
            continue;
        }
        let ws = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        let we = i;
        let mut s = ws;
        let mut e = we;
        while s < e && !chars[s].is_alphanumeric() {
            s += 1;
        }
        while e > s && !chars[e - 1].is_alphanumeric() {
            e -= 1;
        }
        // possessive suffix
        if e - s > 2 && matches!(chars[e - 2], '\'' | '\u{2019}') && chars[e - 1] == 's' {
            e -= 2;
        }
        if s < e {
            out.push(Token {
                start: s,
                end: e,
                capitalized: chars[s].is_uppercase(),
                lead_cut: s > ws,
                trail_cut: e < we,
                paragraph_before: newlines >= 2,
            });
        } else {
            // pure punctuation token breaks any run
            out.push(Token {
                start: ws,
                end: we,
                capitalized: false,
                lead_cut: false,
                trail_cut: true,
                paragraph_before: newlines >= 2,
            });
        }
        newlines = 0;
    }
    out
}

/// Rule-based extractor: maximal runs of capitalized tokens. Punctuation at
/// token edges and possessive `'s` are trimmed and close the run. A run is
/// typed from the gazetteer when its label is a key, otherwise PERSON.
/// The returned spans carry an empty `doc_id`.
pub fn extract_entities_builtin(text: &str, gazetteer: Option<&Gazetteer>) -> Vec<MentionSpan> {
    let toks = tokens(text);
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    let mut joinable = false;
    for t in &toks {
        if !t.capitalized {
            if let Some(r) = open.take() {
                runs.push(r);
            }
            joinable = false;
            continue;
        }
        match open {
            Some((s, _)) if joinable && !t.lead_cut && !t.paragraph_before => {
                open = Some((s, t.end));
            }
            _ => {
                if let Some(r) = open.take() {
                    runs.push(r);
                }
                open = Some((t.start, t.end));
            }
        }
        joinable = !t.trail_cut;
    }
    if let Some(r) = open {
        runs.push(r);
    }

    runs.into_iter()
        .map(|(s, e)| {
            let label = char_slice(text, s, e).unwrap_or_default().to_string();
            let etype = gazetteer.and_then(|g| g.get(&label)).unwrap_or(EntityType::Person);
            MentionSpan {
                doc_id: String::new(),
                start_char: s,
                end_char: e,
                label,
                etype,
            }
        })
        .collect()
}

/// Run the builtin extractor over whole documents.
pub fn extract_corpus(docs: &[Document], gazetteer: Option<&Gazetteer>) -> Vec<MentionSpan> {
    use rayon::prelude::*;
    docs.par_iter()
        .map(|d| {
            let mut spans = extract_entities_builtin(&d.text, gazetteer);
            for s in &mut spans {
                s.doc_id = d.doc_id.clone();
            }
            spans
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

#[derive(Deserialize)]
struct RawAnnotation {
    doc_id: String,
    start_char: usize,
    end_char: usize,
    label: String,
    etype: String,
}

/// Load externally produced mentions and check each against the corpus text.
pub fn load_annotations(path: impl AsRef<Path>, docs: &[Document]) -> Result<Vec<MentionSpan>> {
    let path = path.as_ref();
    let by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut spans = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawAnnotation = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let etype: EntityType = raw.etype.parse()?;
        let doc = by_id
            .get(raw.doc_id.as_str())
            .ok_or_else(|| Error::Validation(format!("annotation references unknown doc_id {:?}", raw.doc_id)))?;
        if raw.end_char <= raw.start_char
            || char_slice(&doc.text, raw.start_char, raw.end_char) != Some(raw.label.as_str())
        {
            return Err(Error::Validation(format!(
                "span {}[{}..{}] does not match label {:?}",
                raw.doc_id, raw.start_char, raw.end_char, raw.label
            )));
        }
        spans.push(MentionSpan {
            doc_id: raw.doc_id,
            start_char: raw.start_char,
            end_char: raw.end_char,
            label: raw.label,
            etype,
        });
    }
    Ok(spans)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedEntity {
    pub entity_uri: String,
    pub label: String,
    pub chunk_count: usize,
}

/// Deterministic seed-entity search: extract spans from the question, look
/// them up exactly, fall back to fuzzy label matching when fewer than three
/// entities were found, then rank by chunk count and cap at `n_seed`.
pub fn entity_search(question: &str, graph: &MentionGraph, n_seed: usize) -> Vec<SeedEntity> {
    let spans = extract_entities_builtin(question, None);
    let index = graph.label_index();

    let mut found: BTreeSet<&str> = BTreeSet::new();
    for span in &spans {
        found.extend(index.lookup(&span.label));
    }

    if found.len() < EXACT_HITS_BEFORE_FUZZY {
        for span in &spans {
            let mut scored: Vec<(u8, &str, &BTreeSet<String>)> = index
                .labels()
                .filter_map(|(label, uris)| {
                    let s = partial_fuzzy_score(&span.label, label);
                    (s >= FUZZY_THRESHOLD).then_some((s, label, uris))
                })
                .collect();
            scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
            for (_, _, uris) in scored.into_iter().take(FUZZY_TOP_K) {
                found.extend(uris.iter().map(String::as_str));
            }
        }
    }

    let mut out: Vec<(String, SeedEntity)> = found
        .into_iter()
        .filter_map(|uri| graph.entity(uri))
        .map(|e| {
            (
                normalize_label(&e.label),
                SeedEntity {
                    entity_uri: e.entity_uri.clone(),
                    label: e.label.clone(),
                    chunk_count: e.chunk_count,
                },
            )
        })
        .collect();
    out.sort_by(|(la, a), (lb, b)| {
        b.chunk_count
            .cmp(&a.chunk_count)
            .then_with(|| la.cmp(lb))
            .then_with(|| a.entity_uri.cmp(&b.entity_uri))
    });
    out.truncate(n_seed);
    out.into_iter().map(|(_, s)| s).collect()
}
