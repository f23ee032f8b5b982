//! Small text helpers shared by the extractors, the linter and the stub backends.
//!
//! All public offsets in this crate are Unicode scalar (char) offsets, not byte
//! offsets. [`CharIndex`] converts between the two.

use serde::{Deserialize, Serialize};

/// Maps byte offsets of a string to char offsets.
pub struct CharIndex {
    // byte offset of every char boundary, plus the total length at the end
    boundaries: Vec<usize>,
}

impl CharIndex {
    pub fn new(s: &str) -> Self {
        let mut boundaries: Vec<usize> = s.char_indices().map(|(b, _)| b).collect();
        boundaries.push(s.len());
        Self { boundaries }
    }

    /// Char offset of a byte offset that lies on a char boundary.
    pub fn char_at(&self, byte: usize) -> usize {
        match self.boundaries.binary_search(&byte) {
            Ok(i) => i,
            Err(i) => i,
        }
    }

    /// Byte offset of a char offset. Offsets past the end clamp to the length.
    pub fn byte_at(&self, ch: usize) -> usize {
        let last = self.boundaries.len() - 1;
        self.boundaries[ch.min(last)]
    }

    pub fn char_len(&self) -> usize {
        self.boundaries.len() - 1
    }
}

/// Slice `s` by char offsets `[start, end)`.
pub fn char_slice(s: &str, start: usize, end: usize) -> &str {
    let idx = CharIndex::new(s);
    &s[idx.byte_at(start)..idx.byte_at(end)]
}

/// Half-open `[start, end)` char range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// A word token with char offsets into the source string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

/// Splits text into words: runs of alphanumerics, keeping a single `-` or `'`
/// when it sits between two alphanumerics ("non-disclosure", "party's").
pub fn word_tokens(s: &str) -> Vec<Token<'_>> {
    let chars: Vec<(usize, char)> = s.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        let mut j = i + 1;
        while j < chars.len() {
            let c = chars[j].1;
            if c.is_alphanumeric() {
                j += 1;
            } else if (c == '-' || c == '\'') && j + 1 < chars.len() && chars[j + 1].1.is_alphanumeric() {
                j += 2;
            } else {
                break;
            }
        }
        let byte_start = chars[start].0;
        let byte_end = if j < chars.len() { chars[j].0 } else { s.len() };
        out.push(Token { text: &s[byte_start..byte_end], start, end: j });
        i = j;
    }
    out
}

/// Lower-cased word set, used for keyword overlap scoring.
pub fn folded_word_set(s: &str) -> std::collections::BTreeSet<String> {
    word_tokens(s).into_iter().map(|t| t.text.to_lowercase()).collect()
}
