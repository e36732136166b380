//! Embeddings, the exact cosine index, and embedder backends.

use std::collections::HashMap;
use std::hash::Hasher;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 256;

/// A unit-norm vector. Construct with [`Embedding::from_raw`].
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// L2-normalize; an all-zero (or non-finite) input becomes the basis vector e_0.
    pub fn from_raw(raw: &[f64]) -> Self {
        assert!(!raw.is_empty(), "embedding dimension must be positive");
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            let mut v = vec![0.0f32; raw.len()];
            v[0] = 1.0;
            return Embedding(v);
        }
        Embedding(raw.iter().map(|v| (v / norm) as f32).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dot(&self, other: &Embedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| f64::from(*a) * f64::from(*b))
            .sum())
    }
}

/// Cosine similarity of unit vectors clamped to `[0, 1]`.
pub fn cosine01(a: &Embedding, b: &Embedding) -> Result<f64> {
    Ok(a.dot(b)?.clamp(0.0, 1.0))
}

/// Anything that deterministically maps text to unit vectors of a fixed size.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>>;

    fn embed(&self, text: &str) -> Result<Embedding> {
        let mut v = self.embed_batch(&[text])?;
        v.pop()
            .ok_or_else(|| Error::Embedder("embedder returned no vectors".into()))
    }
}

/// Signed feature hashing over lowercase alphanumeric tokens, FNV-1a 64.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceEmbedder {
    dim: usize,
}

impl ReferenceEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 8, "reference embedder needs dim >= 8, got {dim}");
        Self { dim }
    }

    pub fn embed_text(&self, text: &str) -> Embedding {
        let mut acc = vec![0.0f64; self.dim];
        let lower = text.to_lowercase();
        for tok in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let h = fnv1a64(tok.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            acc[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        Embedding::from_raw(&acc)
    }
}

impl Default for ReferenceEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

impl Embedder for ReferenceEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

/// Remote embedder: POST `{"texts": [...]}`, expects `{"embeddings": [[...]...]}`.
pub struct HttpEmbedder {
    url: String,
    dim: usize,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, dim: usize) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| Error::Embedder(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            dim,
            client,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        let resp: EmbedResponse = self
            .client
            .post(&self.url)
            .json(&EmbedRequest { texts })
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| Error::Embedder(format!("{}: {e}", self.url)))?;
        if resp.embeddings.len() != texts.len() {
            return Err(Error::Embedder(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                resp.embeddings.len()
            )));
        }
        resp.embeddings
            .iter()
            .map(|v| {
                if v.len() != self.dim {
                    Err(Error::Dimension {
                        expected: self.dim,
                        got: v.len(),
                    })
                } else {
                    Ok(Embedding::from_raw(v))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub chunk_id: String,
    pub similarity: f64,
}

/// Exact (full scan) cosine index keyed by chunk id.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Embedding>,
    pos: HashMap<String, usize>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            vectors: Vec::new(),
            pos: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Insert or replace the embedding for `chunk_id`.
    pub fn upsert(&mut self, chunk_id: &str, emb: Embedding) -> Result<()> {
        if emb.dim() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: emb.dim(),
            });
        }
        match self.pos.get(chunk_id) {
            Some(&i) => self.vectors[i] = emb,
            None => {
                self.pos.insert(chunk_id.to_string(), self.ids.len());
                self.ids.push(chunk_id.to_string());
                self.vectors.push(emb);
            }
        }
        Ok(())
    }

    pub fn get(&self, chunk_id: &str) -> Option<&Embedding> {
        self.pos.get(chunk_id).map(|&i| &self.vectors[i])
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// `cosine01` between the query and a stored chunk.
    pub fn similarity(&self, query: &Embedding, chunk_id: &str) -> Result<f64> {
        let e = self
            .get(chunk_id)
            .ok_or_else(|| Error::NotFound(format!("chunk {chunk_id} in vector index")))?;
        cosine01(query, e)
    }

    /// Exact top-k by similarity descending, ties by chunk id ascending.
    pub fn search_top_k(&self, query: &Embedding, k: usize) -> Result<Vec<Hit>> {
        if query.dim() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let mut hits: Vec<(f64, usize)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| Ok((cosine01(query, v)?, i)))
            .collect::<Result<_>>()?;
        let order =
            |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then_with(|| self.ids[a.1].cmp(&self.ids[b.1]));
        if k < hits.len() {
            hits.select_nth_unstable_by(k, order);
            hits.truncate(k);
        }
        hits.sort_by(order);
        Ok(hits
            .into_iter()
            .map(|(s, i)| Hit {
                chunk_id: self.ids[i].clone(),
                similarity: s,
            })
            .collect())
    }
}

/// Persisted form: ids sorted, vectors as base64 little-endian f32.
#[derive(Serialize, Deserialize)]
struct IndexData {
    dim: usize,
    entries: Vec<(String, String)>,
}

impl Serialize for VectorIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut order: Vec<usize> = (0..self.ids.len()).collect();
        order.sort_by(|&a, &b| self.ids[a].cmp(&self.ids[b]));
        let entries = order
            .into_iter()
            .map(|i| {
                let bytes: Vec<u8> = self.vectors[i].0.iter().flat_map(|f| f.to_le_bytes()).collect();
                (self.ids[i].clone(), B64.encode(bytes))
            })
            .collect();
        IndexData { dim: self.dim, entries }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for VectorIndex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let data = IndexData::deserialize(d)?;
        let mut index = VectorIndex::new(data.dim);
        for (id, b64) in data.entries {
            let bytes = B64.decode(b64).map_err(D::Error::custom)?;
            if bytes.len() != data.dim * 4 {
                return Err(D::Error::custom(format!("vector for {id} has wrong length")));
            }
            let v: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            index.upsert(&id, Embedding(v)).map_err(D::Error::custom)?;
        }
        Ok(index)
    }
}
