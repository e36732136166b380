//! Retrieval evaluation: gold mapping, chunk-level metrics, paired bootstrap,
//! breakdowns and graph-health diagnostics.

mod bootstrap;
mod gold;
mod health;
mod metrics;
mod report;

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bootstrap::{paired_bootstrap, win_tie_loss, BootstrapReport, DEFAULT_RESAMPLES, TIE_TOLERANCE};
pub use gold::{GoldMapper, GoldMapping, MatchStage, SentenceMapping, GOLD_FALLBACK_K, GOLD_SIM_THRESHOLD};
pub use health::{
    categorize_failures, compute_kg_health, evidence_redundancy, jaccard, neighborhood_noise_ratios, FailureCategory,
    KgHealthReport, QuestionFailures,
};
pub use metrics::{prf1, scatter_bin, Prf, ScatterBin};
pub use report::{
    run_eval, Comparison, EvalOptions, EvalOutcome, EvalRecord, EvalReport, GroupStats, Headline, QuestionGold,
    REPORT_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum QType {
    FactRetrieval,
    ComplexReasoning,
    ContextualSummarization,
    CreativeGeneration,
}

impl QType {
    pub const ALL: [QType; 4] = [
        QType::FactRetrieval,
        QType::ComplexReasoning,
        QType::ContextualSummarization,
        QType::CreativeGeneration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QType::FactRetrieval => "FactRetrieval",
            QType::ComplexReasoning => "ComplexReasoning",
            QType::ContextualSummarization => "ContextualSummarization",
            QType::CreativeGeneration => "CreativeGeneration",
        }
    }
}

impl fmt::Display for QType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Accepts `FactRetrieval`, `fact_retrieval`, `Fact Retrieval` and similar.
impl FromStr for QType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "factretrieval" => Ok(QType::FactRetrieval),
            "complexreasoning" => Ok(QType::ComplexReasoning),
            "contextualsummarization" | "contextualsummarize" => Ok(QType::ContextualSummarization),
            "creativegeneration" => Ok(QType::CreativeGeneration),
            _ => Err(Error::Validation(format!("unknown question type {s:?}"))),
        }
    }
}

impl TryFrom<String> for QType {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<QType> for String {
    fn from(t: QType) -> String {
        t.as_str().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub qid: String,
    pub question: String,
    #[serde(rename = "type", alias = "qtype")]
    pub qtype: QType,
    #[serde(default)]
    pub gold_evidence: Vec<String>,
}

/// Read a questions JSONL file: `{qid, question, type, gold_evidence}` per line.
pub fn load_questions(path: impl AsRef<Path>) -> Result<Vec<Question>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(q.qid.clone()) {
            return Err(Error::Validation(format!("duplicate qid {:?}", q.qid)));
        }
        out.push(q);
    }
    Ok(out)
}
