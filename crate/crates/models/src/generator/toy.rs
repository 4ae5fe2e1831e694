//! A first-order transition-table model, handy for checking the decoding loop
//! against hand-enumerated paths.

use crate::error::{ModelError, Result};
use crate::generator::sampling::LanguageModel;
use crate::vocab::{PAD, PAD_ID, UNK, UNK_ID};

pub const TOY_BOS: u32 = 2;
pub const TOY_EOS: u32 = 3;

/// Logits for the next token depend only on the last token of the prefix.
#[derive(Debug, Clone)]
pub struct TransitionModel {
    tokens: Vec<String>,
    logits: Vec<Vec<f32>>,
}

impl TransitionModel {
    /// `words` are assigned ids from 4 upwards; every row starts at -inf-like
    /// logits until set with [`TransitionModel::set`].
    pub fn new(words: &[&str]) -> TransitionModel {
        let mut tokens: Vec<String> = [PAD, UNK, "<bos>", "<eos>"].iter().map(|s| s.to_string()).collect();
        tokens.extend(words.iter().map(|w| w.to_string()));
        let n = tokens.len();
        TransitionModel { tokens, logits: vec![vec![-30.0; n]; n] }
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.tokens.iter().position(|t| t == token).map(|i| i as u32)
    }

    pub fn set(&mut self, from: &str, to: &str, logit: f32) -> Result<()> {
        let f = self.id(from).ok_or_else(|| ModelError::Config(format!("unknown token `{from}`")))?;
        let t = self.id(to).ok_or_else(|| ModelError::Config(format!("unknown token `{to}`")))?;
        self.logits[f as usize][t as usize] = logit;
        Ok(())
    }
}

impl LanguageModel for TransitionModel {
    fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    fn bos_id(&self) -> u32 {
        TOY_BOS
    }

    fn eos_id(&self) -> u32 {
        TOY_EOS
    }

    fn banned_ids(&self) -> Vec<u32> {
        vec![PAD_ID, UNK_ID, TOY_BOS]
    }

    fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    fn next_logits(&self, prefixes: &[Vec<u32>]) -> Result<Vec<Vec<f32>>> {
        Ok(prefixes
            .iter()
            .map(|p| {
                let last = *p.last().unwrap_or(&TOY_BOS) as usize;
                self.logits[last].clone()
            })
            .collect())
    }
}
