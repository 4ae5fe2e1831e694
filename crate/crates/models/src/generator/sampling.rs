//! Temperature sampling with end-token termination.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// A model that scores the next token for a batch of prefixes.
pub trait LanguageModel {
    fn vocab_size(&self) -> usize;
    fn bos_id(&self) -> u32;
    fn eos_id(&self) -> u32;
    /// Ids that must never be sampled (padding, unknown, beginning-of-sequence).
    fn banned_ids(&self) -> Vec<u32>;
    fn token(&self, id: u32) -> &str;
    /// Next-token logits for each prefix. Every prefix starts with `bos_id`.
    fn next_logits(&self, prefixes: &[Vec<u32>]) -> Result<Vec<Vec<f32>>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    /// Hard cap on emitted word tokens.
    pub max_tokens: usize,
    pub seed: u64,
    pub count: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig { temperature: 0.9, max_tokens: 24, seed: 0, count: 1 }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(ModelError::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.max_tokens < 1 {
            return Err(ModelError::Config("max_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub text: String,
    pub tokens: Vec<u32>,
    /// Stopped by `max_tokens` rather than the end token.
    pub hit_max_tokens: bool,
}

/// softmax(logits / temperature), computed in f64 with the max subtracted so
/// a vanishing temperature degenerates to a point mass on the argmax.
pub fn temperature_probs(logits: &[f32], temperature: f64, banned: &[u32]) -> Vec<f64> {
    let allowed = |i: usize| !banned.contains(&(i as u32));
    let max = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| allowed(*i))
        .map(|(_, &l)| f64::from(l))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(i, &l)| if allowed(i) { ((f64::from(l) - max) / temperature).exp() } else { 0.0 })
        .collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    probs
}

/// Inverse-CDF draw for `u` in [0, 1).
pub fn draw(probs: &[f64], u: f64) -> u32 {
    let mut cum = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cum += p;
        last = i;
        if u < cum {
            return i as u32;
        }
    }
    last as u32
}

pub fn argmax(logits: &[f32], banned: &[u32]) -> u32 {
    let mut best = None;
    for (i, &l) in logits.iter().enumerate() {
        if banned.contains(&(i as u32)) {
            continue;
        }
        if best.is_none_or(|(_, b)| l > b) {
            best = Some((i, l));
        }
    }
    best.map_or(0, |(i, _)| i as u32)
}

fn decode<M: LanguageModel + ?Sized>(lm: &M, tokens: &[u32]) -> String {
    tokens.iter().map(|&t| lm.token(t)).collect::<Vec<_>>().join(" ")
}

/// Samples `n` sequences in lockstep, re-feeding each extended prefix until it
/// emits the end token or reaches `max_tokens`. Rows consume random draws in
/// order, so the result depends only on the model, the config and `rng`.
pub fn sample_many<M: LanguageModel + ?Sized>(
    lm: &M,
    cfg: &GenerationConfig,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<SampleOutcome>> {
    cfg.validate()?;
    let banned = lm.banned_ids();
    let eos = lm.eos_id();
    let mut prefixes: Vec<Vec<u32>> = vec![vec![lm.bos_id()]; n];
    let mut finished = vec![false; n];
    for _ in 0..cfg.max_tokens {
        let active: Vec<usize> = (0..n).filter(|&i| !finished[i]).collect();
        if active.is_empty() {
            break;
        }
        let batch: Vec<Vec<u32>> = active.iter().map(|&i| prefixes[i].clone()).collect();
        let logits = lm.next_logits(&batch)?;
        for (row, &i) in active.iter().enumerate() {
            let probs = temperature_probs(&logits[row], cfg.temperature, &banned);
            let next = draw(&probs, rng.random::<f64>());
            if next == eos {
                finished[i] = true;
            } else {
                prefixes[i].push(next);
            }
        }
    }
    Ok(prefixes
        .into_iter()
        .zip(finished)
        .map(|(p, done)| {
            let tokens = p[1..].to_vec();
            SampleOutcome { text: decode(lm, &tokens), tokens, hit_max_tokens: !done }
        })
        .collect())
}

/// One headline drawn with a generator seeded from `cfg.seed`.
pub fn sample_headline<M: LanguageModel + ?Sized>(lm: &M, cfg: &GenerationConfig) -> Result<SampleOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(sample_many(lm, cfg, 1, &mut rng)?.remove(0))
}

/// Explicit argmax decode, the reference for the low-temperature limit.
pub fn greedy_decode<M: LanguageModel + ?Sized>(lm: &M, max_tokens: usize) -> Result<SampleOutcome> {
    let banned = lm.banned_ids();
    let mut prefix = vec![lm.bos_id()];
    for _ in 0..max_tokens {
        let logits = lm.next_logits(std::slice::from_ref(&prefix))?;
        let next = argmax(&logits[0], &banned);
        if next == lm.eos_id() {
            let tokens = prefix[1..].to_vec();
            return Ok(SampleOutcome { text: decode(lm, &tokens), tokens, hit_max_tokens: false });
        }
        prefix.push(next);
    }
    let tokens = prefix[1..].to_vec();
    Ok(SampleOutcome { text: decode(lm, &tokens), tokens, hit_max_tokens: true })
}
