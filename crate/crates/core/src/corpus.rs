//! Corpus loading and paragraph-aligned chunking.
//!
//! All offsets in this crate are counted in Unicode scalar values (Rust
//! `char`s), half-open, into the owning document's text.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_WORDS: usize = 240;
pub const DEFAULT_OVERLAP_WORDS: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    pub start_char: usize,
    pub end_char: usize,
    pub word_count: usize,
    pub seq: usize,
}

pub fn chunk_id(doc_id: &str, seq: usize) -> String {
    format!("{doc_id}#c{seq:05}")
}

/// Slice `text` by char offsets. Returns `None` when the range is out of
/// bounds or inverted.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut start_byte = None;
    let mut end_byte = None;
    for (ci, (bi, _)) in text.char_indices().enumerate() {
        if ci == start {
            start_byte = Some(bi);
        }
        if ci == end {
            end_byte = Some(bi);
            break;
        }
    }
    let total = text.chars().count();
    if start == total {
        start_byte = Some(text.len());
    }
    if end == total {
        end_byte = Some(text.len());
    }
    Some(&text[start_byte?..end_byte?])
}

/// Read a JSONL corpus: one `{doc_id, title, text}` object per line.
/// Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if doc.text.split_whitespace().next().is_none() {
            return Err(Error::Validation(format!(
                "document {:?} has empty text (line {})",
                doc.doc_id,
                i + 1
            )));
        }
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate doc_id {:?} at line {}",
                doc.doc_id,
                i + 1
            )));
        }
        docs.push(doc);
    }
    Ok(docs)
}

#[derive(Debug, Clone, Copy)]
struct Word {
    start_char: usize,
    end_char: usize,
    start_byte: usize,
    end_byte: usize,
}

/// Whitespace tokenization with paragraph boundaries. A paragraph break is a
/// whitespace gap containing at least two newlines (i.e. a blank line).
/// Returns the words and, for each paragraph, its `[first, last)` word range.
fn tokenize(text: &str) -> (Vec<Word>, Vec<(usize, usize)>) {
    let mut words = Vec::new();
    let mut paragraphs = Vec::new();
    let mut para_start = 0usize;
    let mut newlines_in_gap = 0usize;
    let mut current: Option<Word> = None;

    for (char_idx, (bi, ch)) in text.char_indices().enumerate() {
        if ch.is_whitespace() {
            if let Some(w) = current.take() {
                words.push(w);
                newlines_in_gap = 0;
            }
            if ch == '\n' {
                newlines_in_gap += 1;
            }
        } else {
            match current.as_mut() {
                Some(w) => {
                    w.end_char = char_idx + 1;
                    w.end_byte = bi + ch.len_utf8();
                }
                None => {
                    if newlines_in_gap >= 2 && words.len() > para_start {
                        paragraphs.push((para_start, words.len()));
                        para_start = words.len();
                    }
                    newlines_in_gap = 0;
                    current = Some(Word {
                        start_char: char_idx,
                        end_char: char_idx + 1,
                        start_byte: bi,
                        end_byte: bi + ch.len_utf8(),
                    });
                }
            }
        }
    }
    if let Some(w) = current.take() {
        words.push(w);
    }
    if words.len() > para_start {
        paragraphs.push((para_start, words.len()));
    }
    (words, paragraphs)
}

/// Split a document into paragraph-aligned chunks.
///
/// Whole paragraphs are packed greedily while the running word count stays
/// within `max_words`. A paragraph longer than `max_words` is cut into word
/// windows of `max_words`, each window starting `overlap_words` words before
/// the previous one ended. The last window of such a run stays open so that
/// following paragraphs may still be packed onto it. Closing a chunk at a
/// paragraph boundary carries no overlap.
///
/// # Panics
///
/// Panics if `max_words <= overlap_words`.
pub fn chunk_document(doc: &Document, max_words: usize, overlap_words: usize) -> Vec<Chunk> {
    assert!(
        max_words > overlap_words,
        "max_words ({max_words}) must exceed overlap_words ({overlap_words})"
    );
    let (words, paragraphs) = tokenize(&doc.text);

    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<(usize, usize)> = None;

    for &(ps, pe) in &paragraphs {
        let plen = pe - ps;
        if let Some((cs, ce)) = open.take() {
            if ce - cs + plen <= max_words {
                open = Some((cs, pe));
                continue;
            }
            ranges.push((cs, ce));
        }
        let mut start = ps;
        while pe - start > max_words {
            ranges.push((start, start + max_words));
            start += max_words - overlap_words;
        }
        open = Some((start, pe));
    }
    if let Some(r) = open {
        ranges.push(r);
    }

    ranges
        .into_iter()
        .enumerate()
        .map(|(seq, (ws, we))| {
            let first = words[ws];
            let last = words[we - 1];
            Chunk {
                chunk_id: chunk_id(&doc.doc_id, seq),
                doc_id: doc.doc_id.clone(),
                text: doc.text[first.start_byte..last.end_byte].to_string(),
                start_char: first.start_char,
                end_char: last.end_char,
                word_count: we - ws,
                seq,
            }
        })
        .collect()
}

/// Chunk every document, in corpus order.
pub fn chunk_corpus(docs: &[Document], max_words: usize, overlap_words: usize) -> Vec<Chunk> {
    use rayon::prelude::*;
    docs.par_iter()
        .map(|d| chunk_document(d, max_words, overlap_words))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}
