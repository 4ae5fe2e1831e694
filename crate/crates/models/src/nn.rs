//! Small neural building blocks on top of candle.
//!
//! Candle's CPU random generator cannot be seeded, so every parameter and
//! dropout mask here is drawn from a seeded ChaCha stream instead. All models
//! run on the CPU device.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var, D};
use candle_nn::{Embedding, LayerNorm, Linear, Module};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::vocab::PAD_ID;

pub fn device() -> Device {
    Device::Cpu
}

/// Named trainable variables with seeded initialization.
pub struct Params {
    vars: Vec<(String, Var)>,
    rng: ChaCha8Rng,
}

impl Params {
    pub fn new(seed: u64) -> Params {
        Params { vars: Vec::new(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn register(&mut self, name: &str, values: Vec<f32>, shape: &[usize]) -> Result<Tensor> {
        if self.vars.iter().any(|(n, _)| n == name) {
            return Err(ModelError::Config(format!("parameter `{name}` registered twice")));
        }
        let var = Var::from_vec(values, shape, &device())?;
        let t = var.as_tensor().clone();
        self.vars.push((name.to_string(), var));
        Ok(t)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f32) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let v = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
        self.register(name, v, shape)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f32) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let v = (0..n).map(|_| gaussian(&mut self.rng) * std).collect();
        self.register(name, v, shape)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f32) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        self.register(name, vec![value; n], shape)
    }

    /// PyTorch-style linear layer: weights and bias uniform in ±1/sqrt(fan_in).
    pub fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<Linear> {
        let bound = 1.0 / (fan_in as f32).sqrt();
        let w = self.uniform(&format!("{name}.weight"), &[fan_out, fan_in], bound)?;
        let b = self.uniform(&format!("{name}.bias"), &[fan_out], bound)?;
        Ok(Linear::new(w, Some(b)))
    }

    /// Linear layer with N(0, std) weights and zero bias, as used by transformers.
    pub fn linear_normal(&mut self, name: &str, fan_in: usize, fan_out: usize, std: f32) -> Result<Linear> {
        let w = self.normal(&format!("{name}.weight"), &[fan_out, fan_in], std)?;
        let b = self.constant(&format!("{name}.bias"), &[fan_out], 0.0)?;
        Ok(Linear::new(w, Some(b)))
    }

    pub fn embedding(&mut self, name: &str, vocab: usize, dim: usize, std: f32) -> Result<Embedding> {
        let t = self.normal(&format!("{name}.weight"), &[vocab, dim], std)?;
        Ok(Embedding::new(t, dim))
    }

    pub fn layer_norm(&mut self, name: &str, dim: usize) -> Result<LayerNorm> {
        let w = self.constant(&format!("{name}.weight"), &[dim], 1.0)?;
        let b = self.constant(&format!("{name}.bias"), &[dim], 0.0)?;
        Ok(LayerNorm::new(w, b, 1e-5))
    }

    pub fn all(&self) -> Vec<Var> {
        self.vars.iter().map(|(_, v)| v.clone()).collect()
    }

    /// Variables whose names start with any of `prefixes`.
    pub fn with_prefixes(&self, prefixes: &[&str]) -> Vec<Var> {
        self.vars
            .iter()
            .filter(|(n, _)| prefixes.iter().any(|p| n.starts_with(p)))
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.vars.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn count(&self) -> usize {
        self.vars.iter().map(|(_, v)| v.as_tensor().elem_count()).sum()
    }

    pub fn tensors(&self) -> HashMap<String, Tensor> {
        self.vars.iter().map(|(n, v)| (n.clone(), v.as_tensor().clone())).collect()
    }

    /// Copies every variable present in `source` (matching name and shape).
    /// Returns how many were copied.
    pub fn load_from(&self, source: &HashMap<String, Tensor>) -> Result<usize> {
        let mut copied = 0;
        for (name, var) in &self.vars {
            if let Some(t) = source.get(name) {
                if t.dims() != var.as_tensor().dims() {
                    return Err(ModelError::Checkpoint(format!(
                        "shape mismatch for `{name}`: {:?} vs {:?}",
                        t.dims(),
                        var.as_tensor().dims()
                    )));
                }
                var.set(t)?;
                copied += 1;
            }
        }
        Ok(copied)
    }

    /// Loads variables that must all be present in `source`.
    pub fn load_exact(&self, source: &HashMap<String, Tensor>) -> Result<()> {
        let copied = self.load_from(source)?;
        if copied != self.vars.len() {
            let missing: Vec<&str> = self.names().into_iter().filter(|n| !source.contains_key(*n)).collect();
            return Err(ModelError::Checkpoint(format!("missing parameters: {missing:?}")));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        candle_core::safetensors::save(&self.tensors(), path)?;
        Ok(())
    }

    pub fn load_file(path: &Path) -> Result<HashMap<String, Tensor>> {
        Ok(candle_core::safetensors::load(path, &device())?)
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f32 {
    // Box-Muller
    let u1: f32 = rng.random::<f32>().max(f32::MIN_POSITIVE);
    let u2: f32 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f32::consts::PI * u2).cos()
}

/// Inverted dropout with a mask drawn from `rng`. `mask_shape` lets the
/// caller drop whole channels (spatial dropout) by using size-1 axes.
pub fn dropout(x: &Tensor, p: f32, mask_shape: &[usize], rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if p <= 0.0 {
        return Ok(x.clone());
    }
    let n: usize = mask_shape.iter().product();
    let keep = 1.0 - p;
    let mask: Vec<f32> = (0..n).map(|_| if rng.random::<f32>() < keep { 1.0 / keep } else { 0.0 }).collect();
    let mask = Tensor::from_vec(mask, mask_shape, x.device())?;
    Ok(x.broadcast_mul(&mask)?)
}

/// A single-direction LSTM layer that respects a right-padding mask: state is
/// frozen on padded steps and outputs there are zero.
pub struct Lstm {
    input: Linear,
    recurrent: Tensor,
    hidden: usize,
}

impl Lstm {
    pub fn new(params: &mut Params, name: &str, input: usize, hidden: usize) -> Result<Lstm> {
        let bound = 1.0 / (hidden as f32).sqrt();
        let w_ih = params.uniform(&format!("{name}.w_ih"), &[4 * hidden, input], bound)?;
        // Gate order i, f, g, o; forget-gate bias starts at one.
        let mut bias = vec![0.0f32; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        let b = params.register(&format!("{name}.bias"), bias, &[4 * hidden])?;
        let w_hh = params.uniform(&format!("{name}.w_hh"), &[4 * hidden, hidden], bound)?;
        Ok(Lstm { input: Linear::new(w_ih, Some(b)), recurrent: w_hh.t()?, hidden })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// `x`: (B, T, E), `mask`: (B, T) with 1 on tokens. Returns (B, T, H)
    /// outputs and the final hidden state (B, H).
    pub fn forward(&self, x: &Tensor, mask: &Tensor, reverse: bool) -> Result<(Tensor, Tensor)> {
        let (b, t, _) = x.dims3()?;
        let h_dim = self.hidden;
        let projected = self.input.forward(x)?;
        let mut h = Tensor::zeros((b, h_dim), DType::F32, x.device())?;
        let mut c = h.clone();
        let mut outputs: Vec<Tensor> = Vec::with_capacity(t);
        let steps: Vec<usize> = if reverse { (0..t).rev().collect() } else { (0..t).collect() };
        for s in steps {
            let m = mask.narrow(1, s, 1)?;
            let gates = (projected.narrow(1, s, 1)?.squeeze(1)? + h.matmul(&self.recurrent)?)?;
            let i = candle_nn::ops::sigmoid(&gates.narrow(1, 0, h_dim)?)?;
            let f = candle_nn::ops::sigmoid(&gates.narrow(1, h_dim, h_dim)?)?;
            let g = gates.narrow(1, 2 * h_dim, h_dim)?.tanh()?;
            let o = candle_nn::ops::sigmoid(&gates.narrow(1, 3 * h_dim, h_dim)?)?;
            let c_new = ((&f * &c)? + (&i * &g)?)?;
            let h_new = (&o * c_new.tanh()?)?;
            let keep = m.broadcast_as((b, h_dim))?;
            let skip = (1.0 - &keep)?;
            c = ((&c_new * &keep)? + (&c * &skip)?)?;
            h = ((&h_new * &keep)? + (&h * &skip)?)?;
            outputs.push((&h_new * &keep)?);
        }
        if reverse {
            outputs.reverse();
        }
        Ok((Tensor::stack(&outputs, 1)?, h))
    }
}

/// Forward and backward LSTMs with concatenated outputs (B, T, 2H).
pub struct BiLstm {
    forward: Lstm,
    backward: Lstm,
}

impl BiLstm {
    pub fn new(params: &mut Params, name: &str, input: usize, hidden: usize) -> Result<BiLstm> {
        Ok(BiLstm {
            forward: Lstm::new(params, &format!("{name}.fwd"), input, hidden)?,
            backward: Lstm::new(params, &format!("{name}.bwd"), input, hidden)?,
        })
    }

    pub fn forward(&self, x: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let (f, _) = self.forward.forward(x, mask, false)?;
        let (b, _) = self.backward.forward(x, mask, true)?;
        Ok(Tensor::cat(&[f, b], 2)?)
    }
}

/// Masked mean over the time axis. `x`: (B, T, F), `mask`: (B, T).
pub fn masked_mean(x: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let m = mask.unsqueeze(2)?;
    let summed = x.broadcast_mul(&m)?.sum(1)?;
    let counts = mask.sum_keepdim(1)?.clamp(1.0, f64::MAX)?;
    Ok(summed.broadcast_div(&counts)?)
}

/// Masked max over the time axis; padded steps never win.
pub fn masked_max(x: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let penalty = ((mask.unsqueeze(2)? - 1.0)? * 1e4)?;
    Ok(x.broadcast_add(&penalty)?.max(1)?)
}

/// Additive padding bias for attention scores: 0 on tokens, -1e4 on padding.
pub fn padding_bias(mask: &Tensor) -> Result<Tensor> {
    Ok(((mask - 1.0)? * 1e4)?)
}

/// Transformer feed-forward and attention block (pre-LayerNorm).
pub struct TransformerBlock {
    ln1: LayerNorm,
    qkv: Linear,
    proj: Linear,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
    heads: usize,
    dim: usize,
}

impl TransformerBlock {
    pub fn new(params: &mut Params, name: &str, dim: usize, heads: usize, ff: usize) -> Result<TransformerBlock> {
        if dim % heads != 0 {
            return Err(ModelError::Config(format!("model dim {dim} not divisible by {heads} heads")));
        }
        Ok(TransformerBlock {
            ln1: params.layer_norm(&format!("{name}.ln1"), dim)?,
            qkv: params.linear_normal(&format!("{name}.qkv"), dim, 3 * dim, 0.02)?,
            proj: params.linear_normal(&format!("{name}.proj"), dim, dim, 0.02)?,
            ln2: params.layer_norm(&format!("{name}.ln2"), dim)?,
            ff1: params.linear_normal(&format!("{name}.ff1"), dim, ff, 0.02)?,
            ff2: params.linear_normal(&format!("{name}.ff2"), ff, dim, 0.02)?,
            heads,
            dim,
        })
    }

    /// `x`: (B, T, D); `bias`: broadcastable to (B, heads, T, T), added to scores.
    pub fn forward(&self, x: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let (b, t, _) = x.dims3()?;
        let head_dim = self.dim / self.heads;
        let qkv = self.qkv.forward(&self.ln1.forward(x)?)?;
        let split = |i: usize| -> Result<Tensor> {
            Ok(qkv
                .narrow(2, i * self.dim, self.dim)?
                .reshape((b, t, self.heads, head_dim))?
                .transpose(1, 2)?
                .contiguous()?)
        };
        let (q, k, v) = (split(0)?, split(1)?, split(2)?);
        let scores = (q.matmul(&k.t()?)? / (head_dim as f64).sqrt())?;
        let att = candle_nn::ops::softmax_last_dim(&scores.broadcast_add(bias)?)?;
        let ctx = att.matmul(&v)?.transpose(1, 2)?.reshape((b, t, self.dim))?;
        let x = (x + self.proj.forward(&ctx)?)?;
        let ff = self.ff2.forward(&self.ff1.forward(&self.ln2.forward(&x)?)?.gelu()?)?;
        Ok((x + ff)?)
    }
}

/// (1, 1, T, T) bias that hides future positions.
pub fn causal_bias(t: usize) -> Result<Tensor> {
    let v: Vec<f32> = (0..t * t).map(|i| if i % t > i / t { -1e4 } else { 0.0 }).collect();
    Ok(Tensor::from_vec(v, (1, 1, t, t), &device())?)
}

/// A padded batch of token ids, trimmed to its longest row.
pub struct Batch {
    pub ids: Tensor,
    pub mask: Tensor,
    pub rows: usize,
    pub len: usize,
}

/// Builds a batch from already-encoded rows (padded with `PAD_ID`).
pub fn make_batch(rows: &[&[u32]]) -> Result<Batch> {
    let len = rows.iter().map(|r| r.iter().rposition(|&t| t != PAD_ID).map_or(0, |p| p + 1)).max().unwrap_or(0).max(1);
    let mut ids = Vec::with_capacity(rows.len() * len);
    let mut mask = Vec::with_capacity(rows.len() * len);
    for r in rows {
        for i in 0..len {
            let t = r.get(i).copied().unwrap_or(PAD_ID);
            ids.push(t);
            mask.push(if t == PAD_ID { 0.0f32 } else { 1.0 });
        }
    }
    Ok(Batch {
        ids: Tensor::from_vec(ids, (rows.len(), len), &device())?,
        mask: Tensor::from_vec(mask, (rows.len(), len), &device())?,
        rows: rows.len(),
        len,
    })
}

/// Learning-rate schedules used by the training loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Linear decay from the peak to zero.
    LinearDecay,
    /// Linear warm-up over the first quarter, cosine annealing afterwards.
    OneCycle,
}

impl Schedule {
    pub fn lr(self, peak: f64, step: usize, total: usize) -> f64 {
        let total = total.max(1) as f64;
        let s = step as f64;
        match self {
            Schedule::Constant => peak,
            Schedule::LinearDecay => peak * (1.0 - s / total).max(0.0),
            Schedule::OneCycle => {
                let warm = (0.25 * total).max(1.0);
                if s < warm {
                    peak * (0.04 + 0.96 * s / warm)
                } else {
                    let p = ((s - warm) / (total - warm).max(1.0)).min(1.0);
                    peak * (0.5 * (1.0 + (std::f64::consts::PI * p).cos())).max(1e-3)
                }
            }
        }
    }
}

/// Row-wise log-sum-exp cross-entropy for selected positions.
/// `logits`: (N, V), `targets`: (N,) u32.
pub fn cross_entropy(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::loss::cross_entropy(logits, targets)?)
}

/// Binary cross-entropy with logits, averaged. `logits`, `targets`: (B,).
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    // log(1 + e^z) - y z, written stably as max(z,0) - y z + log(1 + e^-|z|)
    let relu = logits.relu()?;
    let abs = logits.abs()?;
    let softplus = ((abs.neg()?.exp()? + 1.0)?.log()? + relu)?;
    Ok((softplus - (logits * targets)?)?.mean_all()?)
}

pub fn sigmoid_scores(logits: &Tensor) -> Result<Vec<f64>> {
    let s = candle_nn::ops::sigmoid(logits)?.to_vec1::<f32>()?;
    Ok(s.into_iter().map(f64::from).collect())
}

pub fn last_dim_argmax(t: &Tensor) -> Result<Vec<u32>> {
    Ok(t.argmax(D::Minus1)?.to_vec1::<u32>()?)
}

/// Adam without weight decay over `vars`.
pub fn adam(vars: Vec<Var>, lr: f64) -> Result<candle_nn::AdamW> {
    use candle_nn::Optimizer;
    let params = candle_nn::ParamsAdamW { lr, weight_decay: 0.0, ..Default::default() };
    Ok(candle_nn::AdamW::new(vars, params)?)
}

/// Shuffled minibatches of example indices.
pub fn shuffled_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(f64::from(t.to_dtype(DType::F32)?.to_scalar::<f32>()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_are_seeded() {
        let mut a = Params::new(3);
        let mut b = Params::new(3);
        let ta = a.normal("w", &[4, 4], 1.0).unwrap().to_vec2::<f32>().unwrap();
        let tb = b.normal("w", &[4, 4], 1.0).unwrap().to_vec2::<f32>().unwrap();
        assert_eq!(ta, tb);
        assert!(a.normal("w", &[1], 1.0).is_err());
    }

    #[test]
    fn masked_pooling_ignores_padding() {
        let x = Tensor::from_vec(vec![1.0f32, 5.0, 3.0, 100.0], (1, 4, 1), &device()).unwrap();
        let mask = Tensor::from_vec(vec![1.0f32, 1.0, 1.0, 0.0], (1, 4), &device()).unwrap();
        assert_eq!(masked_mean(&x, &mask).unwrap().to_vec2::<f32>().unwrap(), [[3.0]]);
        assert_eq!(masked_max(&x, &mask).unwrap().to_vec2::<f32>().unwrap(), [[5.0]]);
    }

    #[test]
    fn lstm_state_is_unchanged_by_trailing_padding() {
        let mut p = Params::new(1);
        let lstm = Lstm::new(&mut p, "l", 3, 4).unwrap();
        let x = Tensor::from_vec((0..12).map(|v| v as f32 / 10.0).collect::<Vec<_>>(), (1, 4, 3), &device()).unwrap();
        let short = x.narrow(1, 0, 2).unwrap();
        let mask_full = Tensor::from_vec(vec![1.0f32, 1.0, 0.0, 0.0], (1, 4), &device()).unwrap();
        let mask_short = Tensor::ones((1, 2), DType::F32, &device()).unwrap();
        for reverse in [false, true] {
            let (_, h1) = lstm.forward(&x, &mask_full, reverse).unwrap();
            let (_, h2) = lstm.forward(&short, &mask_short, reverse).unwrap();
            let d = (h1 - h2).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap();
            assert!(d < 1e-6, "reverse={reverse} diff {d}");
        }
    }

    #[test]
    fn bce_matches_closed_form() {
        let z = Tensor::from_vec(vec![2.0f32, -1.0], 2, &device()).unwrap();
        let y = Tensor::from_vec(vec![1.0f32, 0.0], 2, &device()).unwrap();
        let got = bce_with_logits(&z, &y).unwrap().to_scalar::<f32>().unwrap() as f64;
        let want = ((1.0 + (-2.0f64).exp()).ln() + (1.0 + 1.0f64.exp()).ln() - 0.0) / 2.0;
        let want = want - 0.0 + 0.0;
        // second term: y=0, z=-1 -> log(1+e^-1)
        let want2 = ((1.0 + (-2.0f64).exp()).ln() + (1.0 + (-1.0f64).exp()).ln()) / 2.0;
        assert!((got - want2).abs() < 1e-6, "{got} vs {want2} ({want})");
    }

    #[test]
    fn causal_bias_hides_future() {
        let b = causal_bias(3).unwrap().reshape((3, 3)).unwrap().to_vec2::<f32>().unwrap();
        assert_eq!(b[0], [0.0, -1e4, -1e4]);
        assert_eq!(b[2], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn batch_trims_to_longest_row() {
        let b = make_batch(&[&[5, 6, 0, 0], &[7, 0, 0, 0]]).unwrap();
        assert_eq!(b.len, 2);
        assert_eq!(b.mask.to_vec2::<f32>().unwrap(), [[1.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn schedules() {
        assert_eq!(Schedule::Constant.lr(0.1, 5, 10), 0.1);
        assert!((Schedule::LinearDecay.lr(0.1, 5, 10) - 0.05).abs() < 1e-12);
        let peak = (0..100).map(|s| Schedule::OneCycle.lr(1.0, s, 100)).fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-9);
        assert!(Schedule::OneCycle.lr(1.0, 99, 100) < 0.01);
    }
}
