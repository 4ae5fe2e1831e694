//! Convolutional and recurrent detectors trained from scratch.

use candle_core::{Tensor, D};
use candle_nn::{Embedding, Linear, Module};
use rand_chacha::ChaCha8Rng;

use crate::classifiers::neural::BinaryNet;
use crate::classifiers::spec::{BiLstmSpec, CnnSpec};
use crate::error::Result;
use crate::nn::{dropout, masked_max, masked_mean, padding_bias, BiLstm, Params};

/// 1-D convolution with "same" zero padding, written as a linear map over
/// stacked shifted copies of the input. `x`: (B, T, C_in).
struct Conv1d {
    proj: Linear,
    kernel: usize,
}

impl Conv1d {
    fn new(params: &mut Params, name: &str, input: usize, output: usize, kernel: usize) -> Result<Conv1d> {
        Ok(Conv1d { proj: params.linear(name, input * kernel, output)?, kernel })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let t = x.dim(1)?;
        let left = (self.kernel - 1) / 2;
        let right = self.kernel - 1 - left;
        let padded = x.pad_with_zeros(1, left, right)?;
        let shifted = (0..self.kernel).map(|k| padded.narrow(1, k, t)).collect::<candle_core::Result<Vec<_>>>()?;
        Ok(self.proj.forward(&Tensor::cat(&shifted, 2)?)?)
    }
}

pub(crate) struct CnnNet {
    params: Params,
    embed: Embedding,
    conv1: Conv1d,
    conv2: Conv1d,
    out: Linear,
}

impl CnnNet {
    pub fn new(spec: &CnnSpec, vocab_len: usize, seed: u64) -> Result<CnnNet> {
        let mut params = Params::new(seed);
        let embed = params.embedding("embed", vocab_len, spec.embed_dim, 0.05)?;
        let conv1 = Conv1d::new(&mut params, "conv1", spec.embed_dim, spec.filters[0], spec.kernel_size)?;
        let conv2 = Conv1d::new(&mut params, "conv2", spec.filters[0], spec.filters[1], spec.kernel_size)?;
        let out = params.linear("out", spec.filters[1], 1)?;
        Ok(CnnNet { params, embed, conv1, conv2, out })
    }
}

impl BinaryNet for CnnNet {
    fn params(&self) -> &Params {
        &self.params
    }

    fn logits(&self, ids: &Tensor, mask: &Tensor, _rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let m = mask.unsqueeze(2)?;
        let x = self.embed.forward(ids)?.broadcast_mul(&m)?;
        let x = self.conv1.forward(&x)?.relu()?.broadcast_mul(&m)?;
        let x = self.conv2.forward(&x)?.relu()?;
        let pooled = masked_max(&x, mask)?;
        Ok(self.out.forward(&pooled)?.squeeze(1)?)
    }
}

/// Additive self-attention: score_t = vᵀ tanh(W h_t + b), masked softmax over t.
struct AdditiveAttention {
    w: Linear,
    v: Linear,
}

impl AdditiveAttention {
    fn new(params: &mut Params, input: usize, hidden: usize) -> Result<AdditiveAttention> {
        Ok(AdditiveAttention { w: params.linear("att.w", input, hidden)?, v: params.linear("att.v", hidden, 1)? })
    }

    /// `h`: (B, T, F) → context (B, F).
    fn forward(&self, h: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let scores = self.v.forward(&self.w.forward(h)?.tanh()?)?.squeeze(2)?;
        let weights = candle_nn::ops::softmax(&(scores + padding_bias(mask)?)?, D::Minus1)?;
        Ok(weights.unsqueeze(1)?.matmul(h)?.squeeze(1)?)
    }
}

pub(crate) struct BiLstmNet {
    params: Params,
    embed: Embedding,
    lstm: BiLstm,
    attention: Option<AdditiveAttention>,
    out: Linear,
    embed_dim: usize,
    spatial_dropout: f32,
}

impl BiLstmNet {
    pub fn new(spec: &BiLstmSpec, attention_dim: Option<usize>, vocab_len: usize, seed: u64) -> Result<BiLstmNet> {
        let mut params = Params::new(seed);
        let embed = params.embedding("embed", vocab_len, spec.embed_dim, 0.05)?;
        let lstm = BiLstm::new(&mut params, "lstm", spec.embed_dim, spec.units)?;
        let features = 2 * spec.units;
        let attention = attention_dim.map(|d| AdditiveAttention::new(&mut params, features, d)).transpose()?;
        let pooled = if attention.is_some() { 3 * features } else { 2 * features };
        let out = params.linear("out", pooled, 1)?;
        Ok(BiLstmNet { params, embed, lstm, attention, out, embed_dim: spec.embed_dim, spatial_dropout: spec.spatial_dropout })
    }
}

impl BinaryNet for BiLstmNet {
    fn params(&self) -> &Params {
        &self.params
    }

    fn logits(&self, ids: &Tensor, mask: &Tensor, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let mut x = self.embed.forward(ids)?;
        if let Some(rng) = rng {
            let b = ids.dim(0)?;
            x = dropout(&x, self.spatial_dropout, &[b, 1, self.embed_dim], rng)?;
        }
        let h = self.lstm.forward(&x, mask)?;
        let mut heads = vec![masked_mean(&h, mask)?, masked_max(&h, mask)?];
        if let Some(att) = &self.attention {
            heads.push(att.forward(&h, mask)?);
        }
        Ok(self.out.forward(&Tensor::cat(&heads, 1)?)?.squeeze(1)?)
    }
}
