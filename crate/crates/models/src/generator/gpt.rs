//! A small decoder-only transformer language model.

use candle_core::{Tensor, D};
use candle_nn::{Embedding, LayerNorm, Linear, Module};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::generator::sampling::LanguageModel;
use crate::nn::{causal_bias, device, dropout, Params, TransformerBlock};
use crate::vocab::{VocabIndex, PAD_ID, UNK_ID};

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GptConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    /// Longest input the positional table covers (bos + words).
    pub context: usize,
    pub dropout: f32,
}

impl Default for GptConfig {
    fn default() -> Self {
        GptConfig { d_model: 96, layers: 2, heads: 4, context: 26, dropout: 0.1 }
    }
}

pub struct TinyGpt {
    pub(crate) params: Params,
    pub(crate) vocab: VocabIndex,
    pub(crate) config: GptConfig,
    tok: Embedding,
    pos: Tensor,
    blocks: Vec<TransformerBlock>,
    ln_f: LayerNorm,
    head: Linear,
    bos: u32,
    eos: u32,
}

impl TinyGpt {
    pub fn new(vocab: VocabIndex, config: GptConfig, seed: u64) -> Result<TinyGpt> {
        let mut params = Params::new(seed);
        let d = config.d_model;
        let tok = params.embedding("tok", vocab.len(), d, 0.02)?;
        let pos = params.normal("pos", &[config.context, d], 0.01)?;
        let blocks = (0..config.layers)
            .map(|i| TransformerBlock::new(&mut params, &format!("block{i}"), d, config.heads, 4 * d))
            .collect::<Result<Vec<_>>>()?;
        let ln_f = params.layer_norm("ln_f", d)?;
        let head = params.linear_normal("head", d, vocab.len(), 0.02)?;
        let bos = vocab.id(BOS);
        let eos = vocab.id(EOS);
        Ok(TinyGpt { params, vocab, config, tok, pos, blocks, ln_f, head, bos, eos })
    }

    pub fn vocab(&self) -> &VocabIndex {
        &self.vocab
    }

    pub fn config(&self) -> &GptConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Logits (B, T, V) for ids (B, T). Dropout is applied when `rng` is given.
    pub fn forward(&self, ids: &Tensor, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let (b, t) = ids.dims2()?;
        let d = self.config.d_model;
        let mut x = self.tok.forward(ids)?.broadcast_add(&self.pos.narrow(0, 0, t)?.unsqueeze(0)?)?;
        if let Some(rng) = rng {
            x = dropout(&x, self.config.dropout, &[b, t, d], rng)?;
        }
        let bias = causal_bias(t)?;
        for block in &self.blocks {
            x = block.forward(&x, &bias)?;
        }
        let x = self.ln_f.forward(&x)?.reshape((b * t, d))?;
        Ok(self.head.forward(&x)?.reshape((b, t, self.vocab.len()))?)
    }
}

impl LanguageModel for TinyGpt {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn bos_id(&self) -> u32 {
        self.bos
    }

    fn eos_id(&self) -> u32 {
        self.eos
    }

    fn banned_ids(&self) -> Vec<u32> {
        vec![PAD_ID, UNK_ID, self.bos]
    }

    fn token(&self, id: u32) -> &str {
        self.vocab.token(id)
    }

    fn next_logits(&self, prefixes: &[Vec<u32>]) -> Result<Vec<Vec<f32>>> {
        if prefixes.is_empty() {
            return Ok(Vec::new());
        }
        let ctx = self.config.context;
        // Prefixes in a lockstep batch share one length; otherwise group by length.
        let mut out = vec![Vec::new(); prefixes.len()];
        let mut lengths: Vec<usize> = prefixes.iter().map(|p| p.len().min(ctx)).collect();
        lengths.sort_unstable();
        lengths.dedup();
        for len in lengths {
            let rows: Vec<usize> = (0..prefixes.len()).filter(|&i| prefixes[i].len().min(ctx) == len).collect();
            let mut flat = Vec::with_capacity(rows.len() * len);
            for &i in &rows {
                let p = &prefixes[i];
                flat.extend_from_slice(&p[p.len() - len..]);
            }
            let ids = Tensor::from_vec(flat, (rows.len(), len), &device())?;
            let logits = self.forward(&ids, None)?.narrow(1, len - 1, 1)?.squeeze(1)?;
            let logits = logits.to_vec2::<f32>()?;
            for (row, i) in rows.into_iter().zip(0..) {
                out[row] = logits[i].clone();
            }
        }
        Ok(out)
    }
}

/// Mean next-token cross-entropy over non-padding targets.
pub(crate) fn lm_loss(logits: &Tensor, targets: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let (b, t, v) = logits.dims3()?;
    let logp = candle_nn::ops::log_softmax(&logits.reshape((b * t, v))?, D::Minus1)?;
    let picked = logp.gather(&targets.reshape((b * t, 1))?, 1)?.squeeze(1)?;
    let mask = mask.reshape(b * t)?;
    let total = mask.sum_all()?;
    Ok(((picked * &mask)?.sum_all()?.neg()? / total)?)
}
