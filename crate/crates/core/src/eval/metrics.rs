use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Chunk-level precision, recall and F1. Duplicate retrieved ids count once;
/// recall on an empty gold set is 1.
pub fn prf1<'a>(retrieved: impl IntoIterator<Item = &'a str>, gold: &BTreeSet<String>) -> Prf {
    let retrieved: HashSet<&str> = retrieved.into_iter().collect();
    let hit = retrieved.iter().filter(|id| gold.contains(**id)).count() as f64;
    let precision = if retrieved.is_empty() {
        0.0
    } else {
        hit / retrieved.len() as f64
    };
    let recall = if gold.is_empty() { 1.0 } else { hit / gold.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf { precision, recall, f1 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScatterBin {
    #[serde(rename = "1-5")]
    Low,
    #[serde(rename = "6-10")]
    Mid,
    #[serde(rename = "11+")]
    High,
}

impl ScatterBin {
    pub const ALL: [ScatterBin; 3] = [ScatterBin::Low, ScatterBin::Mid, ScatterBin::High];

    pub fn as_str(self) -> &'static str {
        match self {
            ScatterBin::Low => "1-5",
            ScatterBin::Mid => "6-10",
            ScatterBin::High => "11+",
        }
    }
}

/// Bin by gold chunk count. The flag is set for a zero count, which lands in
/// the lowest bin.
pub fn scatter_bin(gold_count: usize) -> (ScatterBin, bool) {
    match gold_count {
        0 => (ScatterBin::Low, true),
        1..=5 => (ScatterBin::Low, false),
        6..=10 => (ScatterBin::Mid, false),
        _ => (ScatterBin::High, false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn prf1_cases() {
        let p = prf1(["c1", "c2"], &set(&["c1", "c2"]));
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let p = prf1(["c1", "c2", "c3"], &set(&["c1"]));
        assert!((p.precision - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(p.recall, 1.0);
        assert!((p.f1 - 0.5).abs() < 1e-12);
        let p = prf1(["a"], &set(&["b"]));
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
        let p = prf1([], &set(&[]));
        assert_eq!((p.precision, p.recall), (0.0, 1.0));
    }

    #[test]
    fn bin_edges() {
        assert_eq!(scatter_bin(5), (ScatterBin::Low, false));
        assert_eq!(scatter_bin(6), (ScatterBin::Mid, false));
        assert_eq!(scatter_bin(10), (ScatterBin::Mid, false));
        assert_eq!(scatter_bin(11), (ScatterBin::High, false));
        assert_eq!(scatter_bin(0), (ScatterBin::Low, true));
    }
}
