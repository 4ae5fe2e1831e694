//! Headline text normalization and word tokenization.
//!
//! The public headline corpus ships lowercased, so every text entering the
//! system is lowercased, whitespace is collapsed and tokens made up entirely
//! of punctuation are dropped.

/// Normalizes a raw headline: lowercase, single spaces, no punctuation-only tokens.
pub fn normalize(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    for token in lowered.split_whitespace() {
        if token.chars().all(|c| c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace())) {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

/// Splits already-normalized text into word tokens.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

pub fn word_count(text: &str) -> usize {
    words(text).count()
}
