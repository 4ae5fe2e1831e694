//! Frequency-ranked token indexing shared by the word-level models.

use std::collections::HashMap;

use headcheck_core::text;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ModelError, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

/// Dense token ids: `<pad>` is 0, `<unk>` is 1, then any extra specials, then
/// the most frequent training tokens (count descending, ties lexicographic).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabIndex {
    tokens: Vec<String>,
    #[serde(skip)]
    ids: HashMap<String, u32>,
    specials: usize,
}

impl VocabIndex {
    pub fn build<S: AsRef<str>>(texts: &[S], max_size: usize) -> Result<VocabIndex> {
        Self::build_with_specials(texts, max_size, &[])
    }

    /// `max_size` bounds the number of non-special tokens.
    pub fn build_with_specials<S: AsRef<str>>(texts: &[S], max_size: usize, extra: &[&str]) -> Result<VocabIndex> {
        if max_size < 1 {
            return Err(ModelError::Config("vocabulary max_size must be at least 1".into()));
        }
        if texts.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for t in texts {
            for w in text::words(t.as_ref()) {
                *counts.entry(w).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens: Vec<String> = [PAD, UNK].iter().chain(extra).map(|s| s.to_string()).collect();
        let specials = tokens.len();
        tokens.extend(ranked.into_iter().filter(|(w, _)| !tokens_contains_special(w, extra)).take(max_size).map(|(w, _)| w.to_string()));
        Ok(Self::from_tokens(tokens, specials))
    }

    pub fn from_tokens(tokens: Vec<String>, specials: usize) -> VocabIndex {
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        VocabIndex { tokens, ids, specials }
    }

    /// Restores the lookup table after deserialization.
    pub fn reindex(mut self) -> VocabIndex {
        self.ids = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn specials(&self) -> usize {
        self.specials
    }

    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map(String::as_str).unwrap_or(UNK)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn ids_of(&self, text: &str) -> Vec<u32> {
        text::words(text).map(|w| self.id(w)).collect()
    }

    /// Token ids truncated or right-padded to exactly `max_len`.
    pub fn encode(&self, text: &str, max_len: usize) -> Vec<u32> {
        let mut ids: Vec<u32> = text::words(text).take(max_len).map(|w| self.id(w)).collect();
        ids.resize(max_len, PAD_ID);
        ids
    }

    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

fn tokens_contains_special(w: &str, extra: &[&str]) -> bool {
    w == PAD || w == UNK || extra.contains(&w)
}

/// Free-function form of [`VocabIndex::build`].
pub fn build_vocab<S: AsRef<str>>(train_texts: &[S], max_size: usize) -> Result<VocabIndex> {
    VocabIndex::build(train_texts, max_size)
}

/// Free-function form of [`VocabIndex::encode`].
pub fn encode(text: &str, vocab: &VocabIndex, max_len: usize) -> Result<Vec<u32>> {
    if max_len < 1 {
        return Err(ModelError::Config("max_len must be at least 1".into()));
    }
    Ok(vocab.encode(text, max_len))
}
