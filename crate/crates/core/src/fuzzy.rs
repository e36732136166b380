//! Windowed Levenshtein "partial" similarity used by the entity label fallback.

/// Lowercase, trim and collapse internal whitespace.
pub fn normalize_label(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Unit-cost edit distance over chars.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Best score over every window of the longer string whose length equals the
/// shorter one: `round(100 * (1 - d / |short|))`, rounding halves up. Both
/// inputs are normalized first; an empty side scores 0.
pub fn partial_fuzzy_score(a: &str, b: &str) -> u8 {
    let a: Vec<char> = normalize_label(a).chars().collect();
    let b: Vec<char> = normalize_label(b).chars().collect();
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let (short, long) = if b.len() < a.len() { (&b, &a) } else { (&a, &b) };
    let n = short.len();
    let best = long.windows(n).map(|w| levenshtein(short, w)).min().unwrap_or(n).min(n);
    // round(100 * (n - d) / n) with halves up, in integers
    ((200 * (n - best) + n) / (2 * n)) as u8
}
