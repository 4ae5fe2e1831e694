//! Pretrained backbones for the transfer-learning detectors: a recurrent
//! language model and masked-language-model transformer encoders, plus the
//! registry handed to training.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use candle_core::{Tensor, D};
use candle_nn::{Embedding, LayerNorm, Module, Optimizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::nn::{
    adam, device, dropout, make_batch, padding_bias, scalar, shuffled_batches, Lstm, Params, Schedule,
    TransformerBlock,
};
use crate::vocab::{VocabIndex, PAD_ID};

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const MASK: &str = "<mask>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmLmConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub dropout: f32,
}

impl Default for LstmLmConfig {
    fn default() -> Self {
        LstmLmConfig { embed_dim: 100, hidden: 128, dropout: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff: usize,
    /// Longest input the positional table covers.
    pub max_len: usize,
    pub dropout: f32,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { d_model: 192, layers: 4, heads: 4, ff: 768, max_len: 32, dropout: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackboneConfig {
    LstmLm(LstmLmConfig),
    Encoder(EncoderConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainOptions {
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub vocab_size: usize,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions { epochs: 4, seed: 0, lr: 2e-3, batch_size: 64, vocab_size: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub options: PretrainOptions,
    pub texts: usize,
    pub parameters: usize,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Backbone this one was distilled from.
    pub teacher: Option<String>,
}

/// Frozen pretrained weights with their tokenizer.
pub struct Backbone {
    pub name: String,
    pub config: BackboneConfig,
    pub vocab: VocabIndex,
    pub tensors: HashMap<String, Tensor>,
    pub report: PretrainReport,
}

#[derive(Serialize, Deserialize)]
struct BackboneMeta {
    name: String,
    config: BackboneConfig,
    vocab: VocabIndex,
    report: PretrainReport,
}

impl Backbone {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        candle_core::safetensors::save(&self.tensors, dir.join("weights.safetensors"))?;
        let meta = BackboneMeta {
            name: self.name.clone(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            report: self.report.clone(),
        };
        fs::write(dir.join("backbone.json"), serde_json::to_vec_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Backbone> {
        let meta: BackboneMeta = serde_json::from_slice(&fs::read(dir.join("backbone.json"))?)?;
        let tensors = Params::load_file(&dir.join("weights.safetensors"))?;
        Ok(Backbone { name: meta.name, config: meta.config, vocab: meta.vocab.reindex(), tensors, report: meta.report })
    }

    pub fn vocab_hash(&self) -> String {
        self.vocab.content_hash()
    }
}

/// Named pretrained backbones available to training.
#[derive(Clone, Default)]
pub struct Backbones {
    entries: BTreeMap<String, Arc<Backbone>>,
}

impl Backbones {
    pub fn new() -> Backbones {
        Backbones::default()
    }

    pub fn insert(&mut self, backbone: Backbone) {
        self.entries.insert(backbone.name.clone(), Arc::new(backbone));
    }

    pub fn get(&self, name: &str) -> Option<&Arc<Backbone>> {
        self.entries.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Arc<Backbone>> {
        self.get(name).ok_or_else(|| ModelError::MissingBackbone(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    /// Saves each backbone into `root/<name>/`.
    pub fn save(&self, root: &Path) -> Result<()> {
        for (name, b) in &self.entries {
            b.save(&root.join(name))?;
        }
        Ok(())
    }

    /// Loads every backbone directory under `root`; a missing root yields an empty registry.
    pub fn load(root: &Path) -> Result<Backbones> {
        let mut out = Backbones::new();
        if !root.exists() {
            return Ok(out);
        }
        let mut dirs: Vec<_> = fs::read_dir(root)?.collect::<std::io::Result<Vec<_>>>()?;
        dirs.sort_by_key(|e| e.file_name());
        for entry in dirs {
            if entry.path().join("backbone.json").exists() {
                out.insert(Backbone::load(&entry.path())?);
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Recurrent language model

/// Embedding plus one LSTM layer, shared by pretraining and the classifier.
pub(crate) struct LstmLmCore {
    embed: Embedding,
    pub(crate) lstm: Lstm,
    config: LstmLmConfig,
}

impl LstmLmCore {
    pub fn new(params: &mut Params, config: &LstmLmConfig, vocab_len: usize) -> Result<LstmLmCore> {
        let embed = params.embedding("lm.embed", vocab_len, config.embed_dim, 0.1)?;
        let lstm = Lstm::new(params, "lm.lstm", config.embed_dim, config.hidden)?;
        Ok(LstmLmCore { embed, lstm, config: config.clone() })
    }

    /// Outputs (B, T, H) and final state (B, H).
    pub fn forward(&self, ids: &Tensor, mask: &Tensor, rng: Option<&mut ChaCha8Rng>) -> Result<(Tensor, Tensor)> {
        let mut x = self.embed.forward(ids)?;
        if let Some(rng) = rng {
            let (b, t) = ids.dims2()?;
            x = dropout(&x, self.config.dropout, &[b, t, self.config.embed_dim], rng)?;
        }
        self.lstm.forward(&x, mask, false)
    }
}

fn lm_sequences(vocab: &VocabIndex, texts: &[String], max_len: usize) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let (bos, eos) = (vocab.id(BOS), vocab.id(EOS));
    texts
        .iter()
        .map(|t| {
            let mut seq = vec![bos];
            seq.extend(vocab.ids_of(t));
            seq.truncate(max_len);
            seq.push(eos);
            (seq[..seq.len() - 1].to_vec(), seq[1..].to_vec())
        })
        .unzip()
}

/// Masked next-token or masked-token loss over selected flat positions.
fn selected_ce(logits_flat: &Tensor, targets: &[u32]) -> Result<Tensor> {
    let y = Tensor::from_vec(targets.to_vec(), targets.len(), &device())?;
    Ok(candle_nn::loss::cross_entropy(logits_flat, &y)?)
}

/// Flat (row * T + t) indices of non-padding positions and their targets.
fn flat_targets(targets: &[&[u32]], t: usize) -> (Vec<u32>, Vec<u32>) {
    let mut idx = Vec::new();
    let mut ys = Vec::new();
    for (r, row) in targets.iter().enumerate() {
        for (i, &y) in row.iter().enumerate() {
            if y != PAD_ID {
                idx.push((r * t + i) as u32);
                ys.push(y);
            }
        }
    }
    (idx, ys)
}

/// Trains a one-layer LSTM language model on unlabeled headlines.
pub fn pretrain_lstm_lm(name: &str, texts: &[String], config: &LstmLmConfig, options: &PretrainOptions) -> Result<Backbone> {
    if texts.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let vocab = VocabIndex::build_with_specials(texts, options.vocab_size, &[BOS, EOS])?;
    let mut params = Params::new(options.seed);
    let core = LstmLmCore::new(&mut params, config, vocab.len())?;
    let decoder = params.linear("lm.decoder", config.hidden, vocab.len())?;
    let (inputs, targets) = lm_sequences(&vocab, texts, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x1234_5678);
    let mut opt = adam(params.all(), options.lr)?;
    let total = inputs.len().div_ceil(options.batch_size) * options.epochs;
    let mut step = 0;
    let mut epoch_losses = Vec::new();
    for epoch in 0..options.epochs {
        let (mut sum, mut batches) = (0.0, 0usize);
        for idx in shuffled_batches(inputs.len(), options.batch_size, &mut rng) {
            opt.set_learning_rate(Schedule::OneCycle.lr(options.lr, step, total));
            let rows: Vec<&[u32]> = idx.iter().map(|&i| inputs[i].as_slice()).collect();
            let batch = make_batch(&rows)?;
            let tgt: Vec<&[u32]> = idx.iter().map(|&i| targets[i].as_slice()).collect();
            let (flat, ys) = flat_targets(&tgt, batch.len);
            let (h, _) = core.forward(&batch.ids, &batch.mask, Some(&mut rng))?;
            let h = dropout(&h, config.dropout, &[batch.rows, batch.len, config.hidden], &mut rng)?;
            let h = h.reshape((batch.rows * batch.len, config.hidden))?;
            let picked = h.index_select(&Tensor::from_vec(flat.clone(), flat.len(), &device())?, 0)?;
            let loss = selected_ce(&decoder.forward(&picked)?, &ys)?;
            opt.backward_step(&loss)?;
            sum += scalar(&loss)?;
            batches += 1;
            step += 1;
        }
        let mean = sum / batches.max(1) as f64;
        tracing::info!(backbone = name, epoch, loss = mean, "pretraining epoch finished");
        epoch_losses.push(mean);
    }
    Ok(Backbone {
        name: name.to_string(),
        config: BackboneConfig::LstmLm(config.clone()),
        vocab,
        report: PretrainReport {
            options: options.clone(),
            texts: texts.len(),
            parameters: params.count(),
            epoch_losses,
            teacher: None,
        },
        tensors: params.tensors(),
    })
}

// ---------------------------------------------------------------------------
// Transformer encoder

pub(crate) struct EncoderCore {
    tok: Embedding,
    pos: Tensor,
    ln_emb: LayerNorm,
    blocks: Vec<TransformerBlock>,
    ln_f: LayerNorm,
    config: EncoderConfig,
}

impl EncoderCore {
    pub fn new(params: &mut Params, config: &EncoderConfig, vocab_len: usize) -> Result<EncoderCore> {
        let d = config.d_model;
        let tok = params.embedding("enc.tok", vocab_len, d, 0.02)?;
        let pos = params.normal("enc.pos", &[config.max_len, d], 0.01)?;
        let ln_emb = params.layer_norm("enc.ln_emb", d)?;
        let blocks = (0..config.layers)
            .map(|i| TransformerBlock::new(params, &format!("enc.block{i}"), d, config.heads, config.ff))
            .collect::<Result<Vec<_>>>()?;
        let ln_f = params.layer_norm("enc.ln_f", d)?;
        Ok(EncoderCore { tok, pos, ln_emb, blocks, ln_f, config: config.clone() })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Hidden states (B, T, D); inputs longer than the positional table are cut.
    pub fn forward(&self, ids: &Tensor, mask: &Tensor, mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let (b, t) = ids.dims2()?;
        let t = t.min(self.config.max_len);
        let ids = ids.narrow(1, 0, t)?;
        let mask = mask.narrow(1, 0, t)?;
        let d = self.config.d_model;
        let x = self.tok.forward(&ids)?.broadcast_add(&self.pos.narrow(0, 0, t)?.unsqueeze(0)?)?;
        let mut x = self.ln_emb.forward(&x)?;
        if let Some(rng) = rng.as_deref_mut() {
            x = dropout(&x, self.config.dropout, &[b, t, d], rng)?;
        }
        let bias = padding_bias(&mask)?.reshape((b, 1, 1, t))?;
        for block in &self.blocks {
            x = block.forward(&x, &bias)?;
        }
        Ok(self.ln_f.forward(&x)?)
    }

    pub fn token_embeddings(&self) -> &Tensor {
        self.tok.embeddings()
    }
}

struct MlmModel {
    core: EncoderCore,
    bias: Tensor,
}

impl MlmModel {
    fn new(params: &mut Params, config: &EncoderConfig, vocab_len: usize) -> Result<MlmModel> {
        let core = EncoderCore::new(params, config, vocab_len)?;
        let bias = params.constant("mlm.bias", &[vocab_len], 0.0)?;
        Ok(MlmModel { core, bias })
    }

    /// Vocabulary logits at the flat positions `flat`.
    fn logits_at(&self, ids: &Tensor, mask: &Tensor, flat: &[u32], rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let h = self.core.forward(ids, mask, rng)?;
        let (b, t, d) = h.dims3()?;
        let picked = h.reshape((b * t, d))?.index_select(&Tensor::from_vec(flat.to_vec(), flat.len(), &device())?, 0)?;
        Ok(picked.matmul(&self.core.token_embeddings().t()?)?.broadcast_add(&self.bias)?)
    }
}

struct MaskedBatch {
    ids: Tensor,
    mask: Tensor,
    flat: Vec<u32>,
    targets: Vec<u32>,
}

/// Standard masked-LM corruption: 15% of positions (at least one per row) are
/// selected; of those 80% become the mask token, 10% a random token, 10% stay.
fn mask_batch(rows: &[&[u32]], vocab: &VocabIndex, rng: &mut ChaCha8Rng) -> Result<MaskedBatch> {
    let batch = make_batch(rows)?;
    let t = batch.len;
    let mask_id = vocab.id(MASK);
    let first_word = vocab.specials() as u32;
    let vocab_len = vocab.len() as u32;
    let mut ids = Vec::with_capacity(rows.len() * t);
    let mut flat = Vec::new();
    let mut targets = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        let len = row.iter().filter(|&&x| x != PAD_ID).count().min(t);
        let mut chosen: Vec<bool> = (0..len).map(|_| rng.random::<f64>() < 0.15).collect();
        if len > 0 && !chosen.iter().any(|&c| c) {
            chosen[rng.random_range(0..len)] = true;
        }
        for i in 0..t {
            let orig = row.get(i).copied().unwrap_or(PAD_ID);
            if i < len && chosen[i] {
                flat.push((r * t + i) as u32);
                targets.push(orig);
                let roll: f64 = rng.random();
                let replaced = if roll < 0.8 {
                    mask_id
                } else if roll < 0.9 && vocab_len > first_word {
                    rng.random_range(first_word..vocab_len)
                } else {
                    orig
                };
                ids.push(replaced);
            } else {
                ids.push(orig);
            }
        }
    }
    Ok(MaskedBatch { ids: Tensor::from_vec(ids, (rows.len(), t), &device())?, mask: batch.mask, flat, targets })
}

fn encoder_rows(vocab: &VocabIndex, texts: &[String], max_len: usize) -> Vec<Vec<u32>> {
    texts
        .iter()
        .map(|t| {
            let mut ids = vocab.ids_of(t);
            ids.truncate(max_len);
            ids
        })
        .filter(|r| !r.is_empty())
        .collect()
}

/// Pretrains a transformer encoder with the masked-language-model objective.
pub fn pretrain_encoder(name: &str, texts: &[String], config: &EncoderConfig, options: &PretrainOptions) -> Result<Backbone> {
    if texts.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let vocab = VocabIndex::build_with_specials(texts, options.vocab_size, &[MASK])?;
    let mut params = Params::new(options.seed);
    let model = MlmModel::new(&mut params, config, vocab.len())?;
    let rows = encoder_rows(&vocab, texts, config.max_len);
    let epoch_losses = run_mlm(name, &model, &params, &vocab, &rows, options, None)?;
    Ok(Backbone {
        name: name.to_string(),
        config: BackboneConfig::Encoder(config.clone()),
        report: PretrainReport { options: options.clone(), texts: texts.len(), parameters: params.count(), epoch_losses, teacher: None },
        vocab,
        tensors: params.tensors(),
    })
}

const DISTILL_TEMPERATURE: f64 = 2.0;

fn run_mlm(
    name: &str,
    model: &MlmModel,
    params: &Params,
    vocab: &VocabIndex,
    rows: &[Vec<u32>],
    options: &PretrainOptions,
    teacher: Option<&MlmModel>,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0xdead_beef);
    let mut opt = adam(params.all(), options.lr)?;
    let total = rows.len().div_ceil(options.batch_size) * options.epochs;
    let mut step = 0;
    let mut epoch_losses = Vec::new();
    for epoch in 0..options.epochs {
        let (mut sum, mut batches) = (0.0, 0usize);
        for idx in shuffled_batches(rows.len(), options.batch_size, &mut rng) {
            opt.set_learning_rate(Schedule::OneCycle.lr(options.lr, step, total));
            let batch_rows: Vec<&[u32]> = idx.iter().map(|&i| rows[i].as_slice()).collect();
            let mb = mask_batch(&batch_rows, vocab, &mut rng)?;
            let logits = model.logits_at(&mb.ids, &mb.mask, &mb.flat, Some(&mut rng))?;
            let mut loss = selected_ce(&logits, &mb.targets)?;
            if let Some(teacher) = teacher {
                let t_logits = teacher.logits_at(&mb.ids, &mb.mask, &mb.flat, None)?.detach();
                let tau = DISTILL_TEMPERATURE;
                let log_p_t = candle_nn::ops::log_softmax(&(t_logits / tau)?, D::Minus1)?;
                let p_t = log_p_t.exp()?;
                let log_p_s = candle_nn::ops::log_softmax(&(logits / tau)?, D::Minus1)?;
                let kl = (&p_t * (log_p_t - log_p_s)?)?.sum(D::Minus1)?.mean_all()?;
                loss = ((loss * 0.5)? + (kl * (0.5 * tau * tau))?)?;
            }
            opt.backward_step(&loss)?;
            sum += scalar(&loss)?;
            batches += 1;
            step += 1;
        }
        let mean = sum / batches.max(1) as f64;
        tracing::info!(backbone = name, epoch, loss = mean, "pretraining epoch finished");
        epoch_losses.push(mean);
    }
    Ok(epoch_losses)
}

/// Builds a shallower encoder from `teacher`: it keeps every other layer of
/// the teacher as initialization and trains on the masked-LM loss blended
/// with the teacher's softened predictions.
pub fn distill_encoder(name: &str, teacher: &Backbone, texts: &[String], options: &PretrainOptions) -> Result<Backbone> {
    let BackboneConfig::Encoder(tcfg) = &teacher.config else {
        return Err(ModelError::Config(format!("backbone `{}` is not an encoder", teacher.name)));
    };
    if texts.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let vocab = teacher.vocab.clone();
    let mut tparams = Params::new(0);
    let tmodel = MlmModel::new(&mut tparams, tcfg, vocab.len())?;
    tparams.load_exact(&teacher.tensors)?;

    let scfg = EncoderConfig { layers: tcfg.layers.div_ceil(2), ..tcfg.clone() };
    let mut sparams = Params::new(options.seed);
    let smodel = MlmModel::new(&mut sparams, &scfg, vocab.len())?;
    let mut init: HashMap<String, Tensor> = HashMap::new();
    for (k, v) in &teacher.tensors {
        if let Some(rest) = k.strip_prefix("enc.block") {
            let (layer, tail) = rest.split_once('.').expect("block tensor names carry a suffix");
            let layer: usize = layer.parse().map_err(|_| ModelError::Checkpoint(format!("bad tensor name `{k}`")))?;
            if layer % 2 == 0 {
                init.insert(format!("enc.block{}.{tail}", layer / 2), v.copy()?);
            }
        } else {
            init.insert(k.clone(), v.copy()?);
        }
    }
    sparams.load_exact(&init)?;
    let rows = encoder_rows(&vocab, texts, scfg.max_len);
    let epoch_losses = run_mlm(name, &smodel, &sparams, &vocab, &rows, options, Some(&tmodel))?;
    Ok(Backbone {
        name: name.to_string(),
        config: BackboneConfig::Encoder(scfg),
        report: PretrainReport {
            options: options.clone(),
            texts: texts.len(),
            parameters: sparams.count(),
            epoch_losses,
            teacher: Some(teacher.name.clone()),
        },
        vocab,
        tensors: sparams.tensors(),
    })
}
