//! The detector ladder behind one train/predict interface.

mod backbone;
mod baselines;
mod deep;
mod neural;
pub mod spec;
mod transfer;

use std::fs;
use std::path::Path;

use headcheck_core::corpus::LabelCounts;
use headcheck_core::{Label, LabeledExample, Prediction, Predictor};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::vocab::VocabIndex;

pub use backbone::{
    distill_encoder, pretrain_encoder, pretrain_lstm_lm, Backbone, BackboneConfig, Backbones, EncoderConfig,
    LstmLmConfig, PretrainOptions, PretrainReport,
};
pub use baselines::{ElasticNet, NaiveBayes};
pub use neural::EpochRecord;
pub use spec::{ClassifierSpec, TABLE_ROWS};

use baselines::bag;
use neural::{encode_row, fit, score_rows, BinaryNet, Encoded, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneInfo {
    pub name: String,
    pub vocab_hash: String,
    pub report: PretrainReport,
}

/// Provenance for one fitted detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub spec: ClassifierSpec,
    pub seed: u64,
    pub vocab_hash: String,
    pub vocab_size: usize,
    pub backbone: Option<BackboneInfo>,
    pub train_counts: LabelCounts,
    pub dev_counts: LabelCounts,
    pub epoch_log: Vec<EpochRecord>,
    /// Final accuracy on the development split.
    pub dev_accuracy: Option<f64>,
    /// Filled in by callers that know which dataset was used.
    pub dataset_hash: Option<String>,
    pub notes: Vec<String>,
}

enum Fitted {
    NaiveBayes(NaiveBayes),
    ElasticNet(ElasticNet),
    Neural { net: Box<dyn BinaryNet>, prefix: Vec<u32>, max_len: usize },
}

/// A fitted detector. Predictions depend only on its weights and the input.
pub struct TrainedModel {
    vocab: VocabIndex,
    fitted: Fitted,
    pub manifest: TrainingManifest,
}

fn targets(examples: &[LabeledExample]) -> Vec<bool> {
    examples.iter().map(|e| e.label == Label::Generated).collect()
}

fn texts(examples: &[LabeledExample]) -> Vec<&str> {
    examples.iter().map(|e| e.text.as_str()).collect()
}

/// Fits `spec` on `train`. `dev` is only scored (and, for the elastic net,
/// used to pick the penalty strength); it never contributes gradients.
pub fn train(
    spec: &ClassifierSpec,
    train: &[LabeledExample],
    dev: &[LabeledExample],
    seed: u64,
    backbones: &Backbones,
) -> Result<TrainedModel> {
    spec.validate()?;
    let counts = LabelCounts::of(train);
    if counts.real == 0 || counts.generated == 0 {
        return Err(ModelError::DegenerateTrainingSet(format!(
            "training split has {} real and {} generated examples",
            counts.real, counts.generated
        )));
    }
    let y = targets(train);
    let dev_y = targets(dev);
    let mut notes = Vec::new();
    let mut backbone_info = None;
    let mut epoch_log = Vec::new();

    let (vocab, fitted) = match spec {
        ClassifierSpec::NaiveBayes(s) => {
            let vocab = VocabIndex::build(&texts(train), s.vocab_size)?;
            let docs: Vec<_> = train.iter().map(|e| bag(&vocab, &e.text)).collect();
            let model = NaiveBayes::fit(s, &vocab, &docs, &y);
            (vocab, Fitted::NaiveBayes(model))
        }
        ClassifierSpec::ElasticNet(s) => {
            let vocab = VocabIndex::build(&texts(train), s.vocab_size)?;
            let docs: Vec<_> = train.iter().map(|e| bag(&vocab, &e.text)).collect();
            let dev_docs: Vec<_> = dev.iter().map(|e| bag(&vocab, &e.text)).collect();
            let model = ElasticNet::fit(s, vocab.len(), &docs, &y, &dev_docs, &dev_y);
            notes.push(format!("penalty strength {} chosen on dev from {:?}", model.strength, model.dev_accuracy));
            (vocab, Fitted::ElasticNet(model))
        }
        ClassifierSpec::Cnn(s) => {
            let vocab = VocabIndex::build(&texts(train), s.vocab_size)?;
            let net = deep::CnnNet::new(s, vocab.len(), seed)?;
            notes.push(format!("optimizer {} lr {} batch {}", s.optimizer.name, s.optimizer.lr, s.optimizer.batch_size));
            let stage = Stage { vars: net.params().all(), lr: s.optimizer.lr, epochs: s.epochs, schedule: crate::nn::Schedule::Constant };
            let (rows, devrows) = encode_all(&vocab, &[], train, dev, s.max_len);
            epoch_log = run_fit(&net, &rows, &y, &devrows, &dev_y, vec![stage], s.optimizer.batch_size, seed)?;
            (vocab, Fitted::Neural { net: Box::new(net), prefix: Vec::new(), max_len: s.max_len })
        }
        ClassifierSpec::Bilstm(s) | ClassifierSpec::BilstmAttention(spec::BiLstmAttentionSpec { recurrent: s, .. }) => {
            let attention = match spec {
                ClassifierSpec::BilstmAttention(a) => Some(a.attention_dim),
                _ => None,
            };
            let vocab = VocabIndex::build(&texts(train), s.vocab_size)?;
            let net = deep::BiLstmNet::new(s, attention, vocab.len(), seed)?;
            notes.push(format!("optimizer {} lr {} batch {}", s.optimizer.name, s.optimizer.lr, s.optimizer.batch_size));
            notes.push("spatial dropout applied to the embedding layer".into());
            let stage = Stage { vars: net.params().all(), lr: s.optimizer.lr, epochs: s.epochs, schedule: crate::nn::Schedule::Constant };
            let (rows, devrows) = encode_all(&vocab, &[], train, dev, s.max_len);
            epoch_log = run_fit(&net, &rows, &y, &devrows, &dev_y, vec![stage], s.optimizer.batch_size, seed)?;
            (vocab, Fitted::Neural { net: Box::new(net), prefix: Vec::new(), max_len: s.max_len })
        }
        ClassifierSpec::Ulmfit(s) => {
            let bb = backbones.require(&s.backbone)?;
            let net = transfer::UlmfitNet::from_backbone(bb, seed)?;
            let vocab = bb.vocab.clone();
            let prefix = vec![vocab.id(backbone::BOS)];
            let stages = s
                .stages
                .iter()
                .map(|st| Stage { vars: net.trainable(st.trainable), lr: st.lr, epochs: st.epochs, schedule: s.schedule })
                .collect();
            let (rows, devrows) = encode_all(&vocab, &prefix, train, dev, s.max_len);
            epoch_log = run_fit(&net, &rows, &y, &devrows, &dev_y, stages, s.batch_size, seed)?;
            backbone_info = Some(BackboneInfo { name: bb.name.clone(), vocab_hash: bb.vocab_hash(), report: bb.report.clone() });
            (vocab, Fitted::Neural { net: Box::new(net), prefix, max_len: s.max_len })
        }
        ClassifierSpec::Transformer(s) => {
            let bb = backbones.require(&s.backbone)?;
            let net = transfer::EncoderClassifier::from_backbone(bb, seed)?;
            let vocab = bb.vocab.clone();
            let max_len = s.max_len.min(net.max_len());
            let stage = Stage { vars: net.params().all(), lr: s.lr, epochs: s.epochs, schedule: s.schedule };
            let (rows, devrows) = encode_all(&vocab, &[], train, dev, max_len);
            epoch_log = run_fit(&net, &rows, &y, &devrows, &dev_y, vec![stage], s.batch_size, seed)?;
            backbone_info = Some(BackboneInfo { name: bb.name.clone(), vocab_hash: bb.vocab_hash(), report: bb.report.clone() });
            (vocab, Fitted::Neural { net: Box::new(net), prefix: Vec::new(), max_len })
        }
    };

    let mut model = TrainedModel {
        manifest: TrainingManifest {
            spec: spec.clone(),
            seed,
            vocab_hash: vocab.content_hash(),
            vocab_size: vocab.len(),
            backbone: backbone_info,
            train_counts: counts,
            dev_counts: LabelCounts::of(dev),
            epoch_log,
            dev_accuracy: None,
            dataset_hash: None,
            notes,
        },
        vocab,
        fitted,
    };
    if !dev.is_empty() {
        let preds = model.predict_texts(&texts(dev))?;
        let hits = preds.iter().zip(dev).filter(|(p, e)| p.label == e.label).count();
        model.manifest.dev_accuracy = Some(hits as f64 / dev.len() as f64);
    }
    Ok(model)
}

fn encode_all(
    vocab: &VocabIndex,
    prefix: &[u32],
    train: &[LabeledExample],
    dev: &[LabeledExample],
    max_len: usize,
) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let enc = |xs: &[LabeledExample]| xs.iter().map(|e| encode_row(vocab, prefix, &e.text, max_len)).collect();
    (enc(train), enc(dev))
}

#[allow(clippy::too_many_arguments)]
fn run_fit(
    net: &dyn BinaryNet,
    rows: &[Vec<u32>],
    y: &[bool],
    devrows: &[Vec<u32>],
    dev_y: &[bool],
    stages: Vec<Stage>,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<EpochRecord>> {
    let t: Vec<f32> = y.iter().map(|&g| f32::from(u8::from(g))).collect();
    let dt: Vec<f32> = dev_y.iter().map(|&g| f32::from(u8::from(g))).collect();
    fit(net, Encoded { rows, targets: &t }, Encoded { rows: devrows, targets: &dt }, stages, batch_size, seed)
}

impl TrainedModel {
    pub fn spec(&self) -> &ClassifierSpec {
        &self.manifest.spec
    }

    pub fn seed(&self) -> u64 {
        self.manifest.seed
    }

    pub fn vocab(&self) -> &VocabIndex {
        &self.vocab
    }

    pub fn predict_texts(&self, texts: &[&str]) -> Result<Vec<Prediction>> {
        let scores = match &self.fitted {
            Fitted::NaiveBayes(m) => texts.iter().map(|t| m.score(&bag(&self.vocab, t))).collect(),
            Fitted::ElasticNet(m) => texts.iter().map(|t| m.score(&bag(&self.vocab, t))).collect(),
            Fitted::Neural { net, prefix, max_len } => {
                if texts.is_empty() {
                    Vec::new()
                } else {
                    let rows: Vec<Vec<u32>> = texts.iter().map(|t| encode_row(&self.vocab, prefix, t, *max_len)).collect();
                    score_rows(net.as_ref(), &rows)?
                }
            }
        };
        Ok(scores.into_iter().map(Prediction::from_score).collect())
    }

    /// Writes the manifest, the vocabulary and the fitted weights into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&self.manifest)?)?;
        fs::write(dir.join("vocab.json"), serde_json::to_vec(&self.vocab)?)?;
        match &self.fitted {
            Fitted::NaiveBayes(m) => fs::write(dir.join("model.json"), serde_json::to_vec(m)?)?,
            Fitted::ElasticNet(m) => fs::write(dir.join("model.json"), serde_json::to_vec(m)?)?,
            Fitted::Neural { net, .. } => net.params().save(&dir.join("model.safetensors"))?,
        }
        Ok(())
    }

    /// Restores a model written by [`TrainedModel::save`]. Transfer models need
    /// the backbone registry to rebuild their architecture.
    pub fn load(dir: &Path, backbones: &Backbones) -> Result<TrainedModel> {
        let manifest: TrainingManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
        let vocab: VocabIndex = serde_json::from_slice::<VocabIndex>(&fs::read(dir.join("vocab.json"))?)?.reindex();
        if vocab.content_hash() != manifest.vocab_hash {
            return Err(ModelError::Checkpoint("vocabulary does not match manifest".into()));
        }
        let seed = manifest.seed;
        let weights = || crate::nn::Params::load_file(&dir.join("model.safetensors"));
        let fitted = match &manifest.spec {
            ClassifierSpec::NaiveBayes(_) => Fitted::NaiveBayes(serde_json::from_slice(&fs::read(dir.join("model.json"))?)?),
            ClassifierSpec::ElasticNet(_) => Fitted::ElasticNet(serde_json::from_slice(&fs::read(dir.join("model.json"))?)?),
            ClassifierSpec::Cnn(s) => {
                let net = deep::CnnNet::new(s, vocab.len(), seed)?;
                net.params().load_exact(&weights()?)?;
                Fitted::Neural { net: Box::new(net), prefix: Vec::new(), max_len: s.max_len }
            }
            ClassifierSpec::Bilstm(s) => {
                let net = deep::BiLstmNet::new(s, None, vocab.len(), seed)?;
                net.params().load_exact(&weights()?)?;
                Fitted::Neural { net: Box::new(net), prefix: Vec::new(), max_len: s.max_len }
            }
            ClassifierSpec::BilstmAttention(a) => {
                let net = deep::BiLstmNet::new(&a.recurrent, Some(a.attention_dim), vocab.len(), seed)?;
                net.params().load_exact(&weights()?)?;
                Fitted::Neural { net: Box::new(net), prefix: Vec::new(), max_len: a.recurrent.max_len }
            }
            ClassifierSpec::Ulmfit(s) => {
                let bb = backbones.require(&s.backbone)?;
                let BackboneConfig::LstmLm(cfg) = &bb.config else {
                    return Err(ModelError::Config(format!("backbone `{}` is not a recurrent language model", bb.name)));
                };
                let net = transfer::UlmfitNet::new(cfg, vocab.len(), seed)?;
                net.params().load_exact(&weights()?)?;
                let prefix = vec![vocab.id(backbone::BOS)];
                Fitted::Neural { net: Box::new(net), prefix, max_len: s.max_len }
            }
            ClassifierSpec::Transformer(s) => {
                let bb = backbones.require(&s.backbone)?;
                let BackboneConfig::Encoder(cfg) = &bb.config else {
                    return Err(ModelError::Config(format!("backbone `{}` is not a transformer encoder", bb.name)));
                };
                let net = transfer::EncoderClassifier::new(cfg, vocab.len(), seed)?;
                net.params().load_exact(&weights()?)?;
                let max_len = s.max_len.min(net.max_len());
                Fitted::Neural { net: Box::new(net), prefix: Vec::new(), max_len }
            }
        };
        Ok(TrainedModel { vocab, fitted, manifest })
    }
}

impl Predictor for TrainedModel {
    type Error = ModelError;

    fn predict(&self, texts: &[String]) -> Result<Vec<Prediction>> {
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        self.predict_texts(&refs)
    }
}

/// Free-function form of [`TrainedModel::predict_texts`].
pub fn predict(model: &TrainedModel, texts: &[String]) -> Result<Vec<Prediction>> {
    model.predict(texts)
}
