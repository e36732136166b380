//! Fixtures and independently written oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use kgnav::corpus::Document;
use kgnav::entity::{entity_uri, EntityType, MentionSpan};
use kgnav::eval::{QType, Question};
use kgnav::gateway::{Gateway, GatewayError, TurnRequest, TurnResponse};
use kgnav::{BuildOptions, EmbedderSpec, Engine};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};

pub const ETYPES: [EntityType; 4] = [EntityType::Person, EntityType::Org, EntityType::Gpe, EntityType::Loc];

pub fn doc(id: &str, text: &str) -> Document {
    Document {
        doc_id: id.to_string(),
        title: id.to_uppercase(),
        text: text.to_string(),
    }
}

/// Chunk id of the first chunk of a document.
pub fn first_chunk(doc_id: &str) -> String {
    format!("{doc_id}#c00000")
}

pub fn engine(docs: &[Document]) -> Engine {
    Engine::build(docs, &BuildOptions::default(), EmbedderSpec::default()).expect("fixture builds")
}

pub fn annotated_engine(docs: &[Document], spans: Vec<MentionSpan>) -> Engine {
    let opts = BuildOptions {
        builtin_ner: false,
        annotations: spans,
        ..BuildOptions::default()
    };
    Engine::build(docs, &opts, EmbedderSpec::default()).expect("fixture builds")
}

pub fn question(qid: &str, text: &str, gold: &[&str]) -> Question {
    Question {
        qid: qid.to_string(),
        question: text.to_string(),
        qtype: QType::ComplexReasoning,
        gold_evidence: gold.iter().map(|s| s.to_string()).collect(),
    }
}

// ---------------------------------------------------------------------------
// oracles

pub fn norm(s: &str) -> String {
    let mut out = String::new();
    for w in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(w.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Full-matrix unit-cost edit distance.
pub fn edit_distance(a: &[char], b: &[char]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

/// Every window of the longer string against the shorter, scored in floating point.
pub fn brute_partial_score(a: &str, b: &str) -> u8 {
    let a: Vec<char> = norm(a).chars().collect();
    let b: Vec<char> = norm(b).chars().collect();
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let (s, l) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    let n = s.len();
    let mut best = 0u8;
    for start in 0..=(l.len() - n) {
        let d = edit_distance(s, &l[start..start + n]);
        let score = (100.0 * (n - d) as f64 / n as f64).round() as u8;
        best = best.max(score);
    }
    best
}

#[derive(Debug, Clone)]
pub struct OracleEntity {
    pub uri: String,
    pub label: String,
    pub chunk_count: usize,
}

/// Seed lookup from known question spans: exact normalized match, fuzzy
/// fallback under three hits, popularity sort, cap.
pub fn oracle_entity_search(
    spans: &[String],
    entities: &[OracleEntity],
    n_seed: usize,
) -> Vec<(String, String, usize)> {
    let mut found: BTreeSet<&str> = BTreeSet::new();
    for s in spans {
        for e in entities {
            if norm(&e.label) == norm(s) {
                found.insert(&e.uri);
            }
        }
    }
    if found.len() < 3 {
        let labels: BTreeSet<String> = entities.iter().map(|e| norm(&e.label)).collect();
        for s in spans {
            let mut scored: Vec<(u8, &String)> = labels
                .iter()
                .map(|l| (brute_partial_score(s, l), l))
                .filter(|(sc, _)| *sc >= 90)
                .collect();
            scored.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(y.1)));
            for (_, l) in scored.into_iter().take(20) {
                for e in entities.iter().filter(|e| &norm(&e.label) == l) {
                    found.insert(&e.uri);
                }
            }
        }
    }
    let mut out: Vec<&OracleEntity> = entities.iter().filter(|e| found.contains(e.uri.as_str())).collect();
    out.sort_by(|a, b| {
        b.chunk_count
            .cmp(&a.chunk_count)
            .then(norm(&a.label).cmp(&norm(&b.label)))
            .then(a.uri.cmp(&b.uri))
    });
    out.into_iter()
        .take(n_seed)
        .map(|e| (e.uri.clone(), e.label.clone(), e.chunk_count))
        .collect()
}

/// Clamped dot product accumulated left to right.
pub fn oracle_cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        s += f64::from(*x) * f64::from(*y);
    }
    s.clamp(0.0, 1.0)
}

/// Sort `(id, score)` by score descending then id, keep `k`.
pub fn oracle_top_k(mut scored: Vec<(String, f64)>, k: usize) -> Vec<(String, f64)> {
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

/// Question similarity of every indexed chunk.
pub fn full_scan(engine: &Engine, text: &str) -> Vec<(String, f64)> {
    let q = engine.embedder().embed(text).unwrap();
    engine
        .index()
        .ids()
        .iter()
        .map(|id| {
            let v = engine.index().get(id).unwrap();
            (id.clone(), oracle_cosine(q.values(), v.values()))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// random mention graphs: one single-paragraph document per chunk, mentions
// supplied as annotations

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ren", "tas", "vo", "dor", "el", "fin", "gar", "hu", "is", "jo", "mar", "nel", "or", "pra",
    "qui", "sol", "tur", "ul", "vex", "wyn", "zel",
];

pub const FILLER: [&str; 24] = [
    "river", "lantern", "harbor", "winter", "copper", "signal", "garden", "ledger", "market", "bridge", "orchard",
    "meadow", "archive", "compass", "furnace", "quarry", "sailor", "thunder", "velvet", "willow", "anchor", "beacon",
    "cellar", "drum",
];

fn name_word(rng: &mut StdRng) -> String {
    let n = rng.gen_range(2..=3);
    let mut w = String::new();
    for _ in 0..n {
        w.push_str(SYLLABLES.choose(rng).unwrap());
    }
    let mut cs = w.chars();
    let first = cs.next().unwrap().to_ascii_uppercase();
    std::iter::once(first).chain(cs).collect()
}

pub fn random_label(rng: &mut StdRng) -> String {
    if rng.gen_bool(0.5) {
        name_word(rng)
    } else {
        format!("{} {}", name_word(rng), name_word(rng))
    }
}

/// One substitution or deletion at a non-initial lowercase letter.
pub fn typo(rng: &mut StdRng, label: &str) -> String {
    let chars: Vec<char> = label.chars().collect();
    let positions: Vec<usize> = (1..chars.len())
        .filter(|&i| chars[i].is_ascii_lowercase() && chars[i - 1] != ' ')
        .collect();
    let Some(&pos) = positions.choose(rng) else {
        return label.to_string();
    };
    let mut out = chars.clone();
    if rng.gen_bool(0.5) && chars.len() > 4 {
        out.remove(pos);
    } else {
        let mut c = chars[pos];
        while c == chars[pos] {
            c = (b'a' + rng.gen_range(0..26u8)) as char;
        }
        out[pos] = c;
    }
    out.into_iter().collect()
}

pub struct SynthGraph {
    pub docs: Vec<Document>,
    pub spans: Vec<MentionSpan>,
    pub entities: Vec<(String, EntityType)>,
    /// Generated entity indices mentioned by chunk i (document i).
    pub chunk_mentions: Vec<BTreeSet<usize>>,
    pub engine: Engine,
}

pub fn random_mention_graph(rng: &mut StdRng, n_entities: usize, n_chunks: usize, max_mentions: usize) -> SynthGraph {
    let mut entities: Vec<(String, EntityType)> = Vec::new();
    let mut seen: HashSet<(String, EntityType)> = HashSet::new();
    while entities.len() < n_entities {
        let label = match rng.gen_range(0..10) {
            0 if !entities.is_empty() => {
                let base = entities.choose(rng).unwrap().0.clone();
                typo(rng, &base)
            }
            1 if !entities.is_empty() => entities.choose(rng).unwrap().0.clone(),
            _ => random_label(rng),
        };
        let etype = *ETYPES.choose(rng).unwrap();
        if seen.insert((norm(&label), etype)) {
            entities.push((label, etype));
        }
    }

    let mut docs = Vec::with_capacity(n_chunks);
    let mut spans = Vec::new();
    let mut chunk_mentions = Vec::with_capacity(n_chunks);
    for i in 0..n_chunks {
        let doc_id = format!("g{i:03}");
        let m = rng.gen_range(0..=max_mentions.min(n_entities));
        let picked: Vec<usize> = rand::seq::index::sample(rng, n_entities, m).into_vec();
        let mut text = String::new();
        for &e in &picked {
            for _ in 0..rng.gen_range(1..=3) {
                push_word(&mut text, FILLER.choose(rng).unwrap());
            }
            let (start, end) = push_word(&mut text, &entities[e].0);
            spans.push(MentionSpan {
                doc_id: doc_id.clone(),
                start_char: start,
                end_char: end,
                label: entities[e].0.clone(),
                etype: entities[e].1,
            });
        }
        for _ in 0..rng.gen_range(1..=4) {
            push_word(&mut text, FILLER.choose(rng).unwrap());
        }
        chunk_mentions.push(picked.into_iter().collect());
        docs.push(doc(&doc_id, &text));
    }
    let engine = annotated_engine(&docs, spans.clone());
    SynthGraph {
        docs,
        spans,
        entities,
        chunk_mentions,
        engine,
    }
}

impl SynthGraph {
    pub fn chunk_id(&self, i: usize) -> String {
        first_chunk(&self.docs[i].doc_id)
    }

    pub fn uri(&self, e: usize) -> String {
        entity_uri(&self.entities[e].0, self.entities[e].1)
    }

    pub fn chunks_of(&self, e: usize) -> BTreeSet<usize> {
        (0..self.chunk_mentions.len())
            .filter(|&c| self.chunk_mentions[c].contains(&e))
            .collect()
    }

    /// Generated entities that ended up mentioned at least once.
    pub fn present(&self) -> Vec<usize> {
        (0..self.entities.len())
            .filter(|&e| !self.chunks_of(e).is_empty())
            .collect()
    }

    pub fn oracle_entities(&self) -> Vec<OracleEntity> {
        self.present()
            .into_iter()
            .map(|e| OracleEntity {
                uri: self.uri(e),
                label: self.entities[e].0.clone(),
                chunk_count: self.chunks_of(e).len(),
            })
            .collect()
    }

    /// Brute-force pair intersection: neighbor -> shared chunk count.
    pub fn shared_counts(&self, e: usize) -> BTreeMap<usize, usize> {
        let mine = self.chunks_of(e);
        self.present()
            .into_iter()
            .filter(|&o| o != e)
            .filter_map(|o| {
                let n = self.chunks_of(o).intersection(&mine).count();
                (n > 0).then_some((o, n))
            })
            .collect()
    }

    /// Neighbor URIs in tool order: shared desc, normalized label, URI.
    pub fn ordered_neighbors(&self, e: usize) -> Vec<usize> {
        let mut ns: Vec<(usize, usize)> = self.shared_counts(e).into_iter().collect();
        ns.sort_by(|a, b| {
            b.1.cmp(&a.1)
                .then_with(|| norm(&self.entities[a.0].0).cmp(&norm(&self.entities[b.0].0)))
                .then_with(|| self.uri(a.0).cmp(&self.uri(b.0)))
        });
        ns.into_iter().map(|(o, _)| o).collect()
    }

    pub fn index_of(&self) -> HashMap<String, usize> {
        self.present().into_iter().map(|e| (self.uri(e), e)).collect()
    }

    /// Fraction of gold chunks mentioning an entity within `h` hops of a seed.
    pub fn oracle_reachability(&self, seeds: &[usize], gold: &BTreeSet<usize>, h: usize) -> f64 {
        if gold.is_empty() {
            return 1.0;
        }
        let mut dist: HashMap<usize, usize> = HashMap::new();
        let mut q = VecDeque::new();
        for &s in seeds {
            if dist.insert(s, 0).is_none() {
                q.push_back(s);
            }
        }
        while let Some(e) = q.pop_front() {
            let d = dist[&e];
            if d >= h {
                continue;
            }
            for n in self.shared_counts(e).into_keys() {
                if let std::collections::hash_map::Entry::Vacant(v) = dist.entry(n) {
                    v.insert(d + 1);
                    q.push_back(n);
                }
            }
        }
        let hit = gold
            .iter()
            .filter(|&&c| self.chunk_mentions[c].iter().any(|e| dist.contains_key(e)))
            .count();
        hit as f64 / gold.len() as f64
    }

    /// Breadth-first collection from seed URIs, written from the pseudocode.
    /// Returns visited entity URIs in order and the collected chunk ids.
    pub fn oracle_bfs(
        &self,
        seeds: &[String],
        max_depth: usize,
        k: usize,
        stall_break: u32,
    ) -> (Vec<String>, BTreeSet<String>) {
        let idx = self.index_of();
        let mut frontier: VecDeque<usize> = seeds.iter().map(|s| idx[s]).collect();
        let mut depth: HashMap<usize, usize> = frontier.iter().map(|&e| (e, 0)).collect();
        let mut visited_set = HashSet::new();
        let mut visited = Vec::new();
        let mut collected = BTreeSet::new();
        let mut stall = 0;
        while collected.len() < k {
            let Some(e) = frontier.pop_front() else { break };
            if !visited_set.insert(e) {
                continue;
            }
            visited.push(self.uri(e));
            let before = collected.len();
            for c in self.chunks_of(e) {
                collected.insert(self.chunk_id(c));
            }
            if depth[&e] < max_depth {
                for n in self.ordered_neighbors(e) {
                    if !visited_set.contains(&n) {
                        frontier.push_back(n);
                        depth.insert(n, depth[&e] + 1);
                    }
                }
            }
            if collected.len() == before {
                stall += 1;
            } else {
                stall = 0;
            }
            if stall >= stall_break {
                break;
            }
        }
        (visited, collected)
    }
}

/// Append a space-separated word; returns its char span.
fn push_word(text: &mut String, w: &str) -> (usize, usize) {
    if !text.is_empty() {
        text.push(' ');
    }
    let start = text.chars().count();
    text.push_str(w);
    (start, text.chars().count())
}

/// A question naming 0..=4 graph labels, some with typos, plus the spans
/// the question was assembled from.
pub fn random_question(rng: &mut StdRng, g: &SynthGraph) -> (String, Vec<String>) {
    let n = if rng.gen_bool(0.1) {
        rng.gen_range(8..=14)
    } else {
        rng.gen_range(0..=4)
    };
    let mut spans = Vec::new();
    for _ in 0..n {
        let roll: f64 = rng.gen();
        let base = &g.entities.choose(rng).unwrap().0;
        spans.push(if roll < 0.25 {
            typo(rng, base)
        } else if roll < 0.35 {
            random_label(rng)
        } else {
            base.clone()
        });
    }
    let text = if spans.is_empty() {
        "what happened after the storm?".to_string()
    } else {
        format!("what links {}?", spans.join(" and "))
    };
    (text, spans)
}

// ---------------------------------------------------------------------------
// hand-built fixtures

/// Three chunks forming the co-mention chain Alder Finch - Birch Gale - Cedar Holt.
pub fn chain_docs() -> Vec<Document> {
    vec![
        doc("c1", "Alder Finch met Birch Gale at the quay."),
        doc("c2", "Birch Gale wrote to Cedar Holt about the tides."),
        doc("c3", "Cedar Holt kept the lighthouse almanac."),
    ]
}

pub struct Scattered {
    pub docs: Vec<Document>,
    pub questions: Vec<Question>,
    /// Gold chunk ids per question.
    pub gold: Vec<BTreeSet<String>>,
    /// Gold chunks sharing no word with their question.
    pub hidden: Vec<BTreeSet<String>>,
    pub engine: Engine,
}

const Q1: &str = "Where did Marlow Vance hide the stolen ledger?";
const Q1_GOLD: [(&str, &str); 6] = [
    (
        "s01",
        "Marlow Vance hid the stolen ledger beneath the chapel floor while Petra Lund kept watch.",
    ),
    (
        "s02",
        "Quentin Hale saw Marlow Vance carry the ledger toward the chapel at dusk.",
    ),
    (
        "s03",
        "Petra Lund kept a copper lantern burning through each winter night.",
    ),
    (
        "s04",
        "Petra Lund and Rowan Ash rowed across a frozen harbor before sunrise.",
    ),
    ("s05", "Quentin Hale owns a small bakery near an old mill."),
    ("s06", "Rowan Ash buried a locked iron box beneath an oak."),
];
const Q1_DISTRACTORS: [&str; 14] = [
    "the stolen ledger was never found where the clerks searched.",
    "where did the harbor master hide the spare keys",
    "a stolen ledger from the mint caused a long inquiry.",
    "the ledger listed every stolen crate from the docks.",
    "nobody knew where the stolen goods did end up.",
    "the thieves did hide the ledger inside a flour sack.",
    "where to hide a stolen painting is the oldest puzzle.",
    "the stolen ledger pages were burned in the square.",
    "did the guard hide the ledger or sell it",
    "the ledger of stolen horses went missing where the road forks.",
    "to hide the stolen ledger the clerk used a false wall.",
    "where the ledger did go after the fire is unknown.",
    "the stolen seal and the ledger were hidden where nobody looked.",
    "the ledger did not show where the stolen coins went.",
];

const Q2: &str = "Which vessel carried Ilse Moreau across the northern strait?";
const Q2_GOLD: [(&str, &str); 6] = [
    (
        "t01",
        "Ilse Moreau crossed the northern strait aboard a vessel captained by Tobin Reed.",
    ),
    (
        "t02",
        "Nadia Crane watched Ilse Moreau leave the strait at first light.",
    ),
    ("t03", "Tobin Reed repaired fishing nets for his cousin every spring."),
    ("t04", "Tobin Reed shared supper with Osric Vale in a quiet inn."),
    ("t05", "Nadia Crane painted gulls on cedar boards."),
    ("t06", "Osric Vale wrote letters to a distant sister."),
];
const Q2_DISTRACTORS: [&str; 14] = [
    "which vessel carried the grain across the northern strait",
    "the northern strait is narrow and the vessel turned back.",
    "a vessel carried salt across the strait each autumn.",
    "which route across the northern strait is safest",
    "the vessel carried timber across the northern waters.",
    "northern traders carried furs across the strait.",
    "which vessel sank in the northern strait last year",
    "the strait carried strong northern currents across the bay.",
    "a small vessel carried mail across the strait.",
    "which northern port sends a vessel across the strait",
    "the ferry carried carts across the northern strait.",
    "the old vessel carried lamps across the strait.",
    "which captain carried the vessel across the strait",
    "northern winds carried the vessel across the strait.",
];

/// Forty single-chunk documents and two questions. Each question has six
/// gold chunks: two share words with it and mention the seed entity, four
/// share no words with it and are one or two co-mention hops away. Fourteen
/// lowercase distractors per question share many of its words.
pub fn scattered() -> Scattered {
    let mut docs = Vec::new();
    let mut questions = Vec::new();
    let mut gold = Vec::new();
    let mut hidden = Vec::new();
    let sets = [
        ("q1", Q1, &Q1_GOLD, &Q1_DISTRACTORS, "x"),
        ("q2", Q2, &Q2_GOLD, &Q2_DISTRACTORS, "y"),
    ];
    for (qid, text, golds, distractors, prefix) in sets {
        for (id, t) in golds.iter() {
            docs.push(doc(id, t));
        }
        for (i, t) in distractors.iter().enumerate() {
            docs.push(doc(&format!("{prefix}{:02}", i + 1), t));
        }
        let sentences: Vec<&str> = golds.iter().map(|(_, t)| *t).collect();
        questions.push(question(qid, text, &sentences));
        gold.push(golds.iter().map(|(id, _)| first_chunk(id)).collect());
        hidden.push(golds[2..].iter().map(|(id, _)| first_chunk(id)).collect());
    }
    let engine = engine(&docs);
    Scattered {
        docs,
        questions,
        gold,
        hidden,
        engine,
    }
}

// ---------------------------------------------------------------------------
// a gateway that plays the three-phase exploration policy from the turn history

/// Deterministic stand-in for a navigating model.
///
/// Turn 1 searches seeds; turns 2-3 fetch seed chunks and read a few;
/// turns 4-7 expand explored entities, fetch new neighbors and collect what
/// was surfaced; from turn 8 it collects the rest and then answers.
pub struct PhasePolicy;

#[derive(Default)]
struct Seen {
    seeds: Vec<String>,
    explored: Vec<String>,
    expanded: Vec<String>,
    discovered: Vec<String>,
    chunks: Vec<String>,
    collected: HashSet<String>,
    read: HashSet<String>,
}

fn push_unique(v: &mut Vec<String>, s: &str) {
    if !v.iter().any(|x| x == s) {
        v.push(s.to_string());
    }
}

impl Seen {
    fn from_history(req: &TurnRequest) -> Self {
        let mut s = Seen::default();
        for h in &req.history {
            let arg = |k: &str| h.args.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
            match h.tool.as_str() {
                "entity_search" => {
                    for e in h.result["entities"].as_array().into_iter().flatten() {
                        push_unique(&mut s.seeds, e["entity_uri"].as_str().unwrap());
                    }
                }
                "get_chunks_for_entity" => {
                    push_unique(&mut s.explored, &arg("uri"));
                    for c in h.result["chunks"].as_array().into_iter().flatten() {
                        push_unique(&mut s.chunks, c["chunk_id"].as_str().unwrap());
                    }
                }
                "expand_neighbors" => {
                    push_unique(&mut s.expanded, &arg("uri"));
                    for n in h.result["neighbors"].as_array().into_iter().flatten() {
                        push_unique(&mut s.discovered, n["neighbor_uri"].as_str().unwrap());
                    }
                }
                "collect_chunk" => {
                    s.collected.insert(arg("chunk_id"));
                }
                "read_chunk" => {
                    s.read.insert(arg("chunk_id"));
                }
                _ => {}
            }
        }
        s
    }

    fn uncollected(&self) -> impl Iterator<Item = &String> {
        self.chunks.iter().filter(|c| !self.collected.contains(*c))
    }
}

fn act(tool: &str, args: Value) -> Value {
    json!({ "tool": tool, "args": args })
}

fn collect(id: &str) -> Value {
    act(
        "collect_chunk",
        json!({ "chunk_id": id, "relevance": "linked to the seed neighborhood" }),
    )
}

impl PhasePolicy {
    pub fn respond(req: &TurnRequest) -> Value {
        let s = Seen::from_history(req);
        let mut actions = Vec::new();
        match req.turn {
            1 => actions.push(act("entity_search", json!({ "query": req.question }))),
            2 => {
                for uri in &s.seeds {
                    actions.push(act("get_chunks_for_entity", json!({ "uri": uri })));
                }
            }
            3 => {
                for c in s.chunks.iter().filter(|c| !s.read.contains(*c)).take(3) {
                    actions.push(act("read_chunk", json!({ "chunk_id": c })));
                }
            }
            4..=7 => {
                for uri in s.explored.iter().filter(|u| !s.expanded.contains(u)) {
                    actions.push(act("expand_neighbors", json!({ "uri": uri })));
                }
                for uri in s.discovered.iter().filter(|u| !s.explored.contains(u)) {
                    actions.push(act("get_chunks_for_entity", json!({ "uri": uri })));
                }
                actions.extend(s.uncollected().map(|c| collect(c)));
            }
            _ => actions.extend(s.uncollected().map(|c| collect(c))),
        }
        if actions.is_empty() {
            json!({ "final": "evidence gathered" })
        } else {
            json!({ "actions": actions })
        }
    }
}

impl Gateway for PhasePolicy {
    fn turn(&self, req: &TurnRequest) -> Result<TurnResponse, GatewayError> {
        Ok(TurnResponse::from_wire(&Self::respond(req)))
    }

    fn oneshot(&self, _prompt: &str) -> Result<String, GatewayError> {
        Ok("no answer".to_string())
    }
}

/// Rebuild a replay script from a trace: each turn's executed calls, or its
/// final text.
pub fn script_from_trace(trace: &kgnav::trace::Trace) -> Value {
    let mut turns = serde_json::Map::new();
    for t in trace.turns() {
        let v = match &t.final_text {
            Some(text) => json!({ "final": text }),
            None => {
                let actions: Vec<Value> = trace
                    .tool_calls()
                    .filter(|c| c.turn == t.turn)
                    .map(|c| act(&c.tool, c.args.clone()))
                    .collect();
                json!({ "actions": actions })
            }
        };
        turns.insert(t.turn.to_string(), v);
    }
    json!({ "turns": turns })
}
