//! Headline generation: fit a small autoregressive model on one era's real
//! headlines, then draw synthetic headlines by temperature sampling.

mod gpt;
pub mod sampling;
pub mod toy;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use candle_core::Tensor;
use candle_nn::Optimizer;
use headcheck_core::{Era, Headline, Label};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::nn::{adam, device, scalar, shuffled_batches, Params, Schedule};
use crate::vocab::{VocabIndex, PAD_ID};

pub use gpt::{GptConfig, TinyGpt, BOS, EOS};
pub use sampling::{
    greedy_decode, sample_headline, sample_many, GenerationConfig, LanguageModel, SampleOutcome,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneOptions {
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub vocab_size: usize,
    pub model: GptConfig,
}

impl Default for FinetuneOptions {
    fn default() -> Self {
        FinetuneOptions { epochs: 6, seed: 0, lr: 3e-3, batch_size: 32, vocab_size: 12_000, model: GptConfig::default() }
    }
}

/// Provenance written next to a generator checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorManifest {
    pub era: Era,
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub schedule: Schedule,
    pub model: GptConfig,
    pub parameters: usize,
    pub vocab_size: usize,
    pub vocab_hash: String,
    pub training_headlines: usize,
    /// Sampling defaults in force when the model was trained.
    pub temperature: f64,
    pub max_tokens: usize,
    /// Mean next-token loss over the training headlines before the first update.
    pub loss_before: f64,
    /// The same loss measured after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// A fitted generator tagged with the era it was trained on.
pub struct LmHandle {
    pub model: TinyGpt,
    pub manifest: GeneratorManifest,
}

impl LmHandle {
    pub fn era(&self) -> Era {
        self.manifest.era
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.model.params().save(&dir.join("model.safetensors"))?;
        fs::write(dir.join("vocab.json"), serde_json::to_vec(self.model.vocab())?)?;
        fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&self.manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<LmHandle> {
        let manifest: GeneratorManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
        let vocab: VocabIndex = serde_json::from_slice::<VocabIndex>(&fs::read(dir.join("vocab.json"))?)?.reindex();
        if vocab.content_hash() != manifest.vocab_hash {
            return Err(ModelError::Checkpoint("vocabulary does not match manifest".into()));
        }
        let model = TinyGpt::new(vocab, manifest.model.clone(), manifest.seed)?;
        model.params().load_exact(&Params::load_file(&dir.join("model.safetensors"))?)?;
        Ok(LmHandle { model, manifest })
    }
}

/// The single era every headline belongs to, or an error.
pub fn training_era(headlines: &[Headline]) -> Result<Era> {
    if headlines.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let mut eras = HashSet::new();
    for h in headlines {
        if h.source != Label::Real {
            return Err(ModelError::Config("generator training input must be real headlines".into()));
        }
        match h.era() {
            Some(e) => {
                eras.insert(e);
            }
            None => return Err(ModelError::EraContamination(format!("year {} belongs to no era", h.year))),
        }
    }
    if eras.len() > 1 {
        return Err(ModelError::EraContamination("input mixes defender and attacker years".into()));
    }
    Ok(eras.into_iter().next().expect("non-empty"))
}

struct Sequences {
    inputs: Vec<Vec<u32>>,
    targets: Vec<Vec<u32>>,
}

fn sequences(model: &TinyGpt, headlines: &[Headline]) -> Sequences {
    let ctx = model.config.context;
    let (bos, eos) = (model.bos_id(), model.eos_id());
    let mut inputs = Vec::with_capacity(headlines.len());
    let mut targets = Vec::with_capacity(headlines.len());
    for h in headlines {
        let mut seq = vec![bos];
        seq.extend(model.vocab.ids_of(&h.text));
        seq.push(eos);
        seq.truncate(ctx + 1);
        inputs.push(seq[..seq.len() - 1].to_vec());
        targets.push(seq[1..].to_vec());
    }
    Sequences { inputs, targets }
}

fn padded(rows: &[&Vec<u32>]) -> Result<(Tensor, usize)> {
    let len = rows.iter().map(|r| r.len()).max().unwrap_or(1);
    let mut flat = Vec::with_capacity(rows.len() * len);
    for r in rows {
        flat.extend_from_slice(r);
        flat.extend(std::iter::repeat_n(PAD_ID, len - r.len()));
    }
    Ok((Tensor::from_vec(flat, (rows.len(), len), &device())?, len))
}

fn batch_loss(model: &TinyGpt, seqs: &Sequences, idx: &[usize], rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
    let inputs: Vec<&Vec<u32>> = idx.iter().map(|&i| &seqs.inputs[i]).collect();
    let targets: Vec<&Vec<u32>> = idx.iter().map(|&i| &seqs.targets[i]).collect();
    let (x, _) = padded(&inputs)?;
    let (y, _) = padded(&targets)?;
    let mask = y.ne(PAD_ID)?.to_dtype(candle_core::DType::F32)?;
    let logits = model.forward(&x, rng)?;
    gpt::lm_loss(&logits, &y, &mask)
}

fn corpus_loss(model: &TinyGpt, seqs: &Sequences) -> Result<f64> {
    let n = seqs.inputs.len();
    let mut total = 0.0;
    let mut tokens = 0.0;
    for chunk in (0..n).collect::<Vec<_>>().chunks(256) {
        let count: usize = chunk.iter().map(|&i| seqs.targets[i].len()).sum();
        total += scalar(&batch_loss(model, seqs, chunk, None)?)? * count as f64;
        tokens += count as f64;
    }
    Ok(total / tokens)
}

/// Trains a fresh model on one era's real headlines.
pub fn finetune_lm(real_headlines: &[Headline], options: &FinetuneOptions) -> Result<LmHandle> {
    let era = training_era(real_headlines)?;
    if options.epochs < 1 || options.batch_size < 1 {
        return Err(ModelError::Config("epochs and batch_size must be at least 1".into()));
    }
    let texts: Vec<&str> = real_headlines.iter().map(|h| h.text.as_str()).collect();
    let vocab = VocabIndex::build_with_specials(&texts, options.vocab_size, &[BOS, EOS])?;
    let model = TinyGpt::new(vocab, options.model.clone(), options.seed)?;
    let seqs = sequences(&model, real_headlines);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut opt = adam(model.params().all(), options.lr)?;
    let steps_per_epoch = real_headlines.len().div_ceil(options.batch_size);
    let total_steps = steps_per_epoch * options.epochs;
    let schedule = Schedule::OneCycle;

    let loss_before = corpus_loss(&model, &seqs)?;
    let mut epoch_losses = Vec::with_capacity(options.epochs);
    let mut step = 0;
    for epoch in 0..options.epochs {
        for idx in shuffled_batches(seqs.inputs.len(), options.batch_size, &mut rng) {
            opt.set_learning_rate(schedule.lr(options.lr, step, total_steps));
            let loss = batch_loss(&model, &seqs, &idx, Some(&mut rng))?;
            opt.backward_step(&loss)?;
            step += 1;
        }
        let loss = corpus_loss(&model, &seqs)?;
        tracing::info!(epoch, loss, "generator epoch finished");
        epoch_losses.push(loss);
    }

    let defaults = GenerationConfig::default();
    let manifest = GeneratorManifest {
        era,
        seed: options.seed,
        epochs: options.epochs,
        lr: options.lr,
        batch_size: options.batch_size,
        schedule,
        model: options.model.clone(),
        parameters: model.params().count(),
        vocab_size: model.vocab().len(),
        vocab_hash: model.vocab().content_hash(),
        training_headlines: real_headlines.len(),
        temperature: defaults.temperature,
        max_tokens: defaults.max_tokens,
        loss_before,
        epoch_losses,
    };
    Ok(LmHandle { model, manifest })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedBatch {
    pub headlines: Vec<Headline>,
    /// Samples dropped for matching an excluded text, an earlier sample, or being empty.
    pub discarded: usize,
    /// Samples that hit `max_tokens` before the end token (kept).
    pub truncated: usize,
    /// How many of the requested headlines could not be produced within the retry budget.
    pub shortfall: usize,
}

/// Retry budget: total draws allowed for a request of `count` headlines.
pub fn draw_budget(count: usize) -> usize {
    count * 4 + 64
}

const SAMPLE_CHUNK: usize = 128;

/// Draws `cfg.count` distinct generated headlines that avoid `exclusion`.
pub fn generate_batch(lm: &LmHandle, cfg: &GenerationConfig, exclusion: &HashSet<String>) -> Result<GeneratedBatch> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = GeneratedBatch { headlines: Vec::with_capacity(cfg.count), discarded: 0, truncated: 0, shortfall: 0 };
    let budget = draw_budget(cfg.count);
    let mut drawn = 0;
    while out.headlines.len() < cfg.count && drawn < budget {
        let want = (cfg.count - out.headlines.len()).min(SAMPLE_CHUNK).min(budget - drawn);
        drawn += want;
        for s in sample_many(&lm.model, cfg, want, &mut rng)? {
            if out.headlines.len() == cfg.count {
                break;
            }
            if s.text.is_empty() || exclusion.contains(&s.text) || !seen.insert(s.text.clone()) {
                out.discarded += 1;
                continue;
            }
            out.truncated += usize::from(s.hit_max_tokens);
            out.headlines.push(Headline::generated(&s.text, lm.era())?);
        }
    }
    out.shortfall = cfg.count - out.headlines.len();
    if out.shortfall > 0 {
        tracing::warn!(shortfall = out.shortfall, discarded = out.discarded, "retry budget exhausted");
    }
    Ok(out)
}
