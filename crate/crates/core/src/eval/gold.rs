//! Two-stage mapping of gold evidence sentences onto chunk ids.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::error::Result;
use crate::vector::{Embedder, VectorIndex};

pub const GOLD_FALLBACK_K: usize = 5;
pub const GOLD_SIM_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStage {
    Substring,
    Semantic,
    Unmapped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceMapping {
    pub sentence: String,
    pub stage: MatchStage,
    pub chunks: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoldMapping {
    pub chunks: BTreeSet<String>,
    pub sentences: Vec<SentenceMapping>,
}

impl GoldMapping {
    pub fn unmapped(&self) -> usize {
        self.sentences
            .iter()
            .filter(|s| s.stage == MatchStage::Unmapped)
            .count()
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Holds normalized chunk texts so many questions can be mapped cheaply.
pub struct GoldMapper<'a> {
    chunks: Vec<(&'a str, String)>,
    index: &'a VectorIndex,
    embedder: &'a dyn Embedder,
    fallback_k: usize,
    threshold: f64,
}

impl<'a> GoldMapper<'a> {
    pub fn new(chunks: &'a [Chunk], index: &'a VectorIndex, embedder: &'a dyn Embedder) -> Self {
        Self {
            chunks: chunks
                .iter()
                .map(|c| (c.chunk_id.as_str(), normalize(&c.text)))
                .collect(),
            index,
            embedder,
            fallback_k: GOLD_FALLBACK_K,
            threshold: GOLD_SIM_THRESHOLD,
        }
    }

    pub fn with_fallback(mut self, k: usize, threshold: f64) -> Self {
        self.fallback_k = k;
        self.threshold = threshold;
        self
    }

    pub fn map_sentence(&self, sentence: &str) -> Result<SentenceMapping> {
        let needle = normalize(sentence);
        if needle.is_empty() {
            return Ok(SentenceMapping {
                sentence: sentence.to_string(),
                stage: MatchStage::Unmapped,
                chunks: Vec::new(),
            });
        }
        let contained: Vec<String> = self
            .chunks
            .iter()
            .filter(|(_, text)| text.contains(&needle))
            .map(|(id, _)| id.to_string())
            .collect();
        if !contained.is_empty() {
            return Ok(SentenceMapping {
                sentence: sentence.to_string(),
                stage: MatchStage::Substring,
                chunks: contained,
            });
        }
        let q = self.embedder.embed(sentence)?;
        let similar: Vec<String> = self
            .index
            .search_top_k(&q, self.fallback_k)?
            .into_iter()
            .filter(|h| h.similarity >= self.threshold)
            .map(|h| h.chunk_id)
            .collect();
        let stage = if similar.is_empty() {
            MatchStage::Unmapped
        } else {
            MatchStage::Semantic
        };
        Ok(SentenceMapping {
            sentence: sentence.to_string(),
            stage,
            chunks: similar,
        })
    }

    pub fn map(&self, sentences: &[String]) -> Result<GoldMapping> {
        let mut out = GoldMapping::default();
        for s in sentences {
            let m = self.map_sentence(s)?;
            out.chunks.extend(m.chunks.iter().cloned());
            out.sentences.push(m);
        }
        Ok(out)
    }
}
