//! Text normalization and tokenization shared by every stage.
//!
//! All word counts, TF-IDF terms and Jaccard token sets are computed on text
//! that has gone through [`normalize_text`], so the numbers agree across the
//! pipeline.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

/// Replaces line breaks with spaces and collapses whitespace runs into a single
/// space. Leading and trailing whitespace is removed.
pub fn normalize_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Canonical label form: lowercase, trimmed, internal whitespace collapsed.
///
/// Empty input yields an empty string; callers decide whether that is an error.
pub fn normalize_label(raw: &str) -> String {
    normalize_text(raw).to_lowercase()
}

/// Lowercased alphanumeric runs of `text`.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// Token set used for vocabulary-overlap diagnostics.
pub fn token_set(text: &str) -> BTreeSet<String> {
    tokens(&normalize_text(text)).collect()
}

/// Whitespace-delimited word count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Keeps at most `cap` whitespace-delimited words. Returns the (possibly
/// unchanged) text and whether anything was cut.
pub fn truncate_words(text: &str, cap: usize) -> (String, bool) {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= cap {
        return (normalize_text(text), false);
    }
    (words[..cap].join(" "), true)
}

/// Rough token estimate (characters / 3) used for prompt budget checks.
pub fn approx_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(3)
}
