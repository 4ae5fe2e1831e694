//! Detectors that start from a pretrained backbone.

use candle_core::{Tensor, Var};
use candle_nn::{Linear, Module};
use rand_chacha::ChaCha8Rng;

use crate::classifiers::backbone::{Backbone, BackboneConfig, EncoderConfig, EncoderCore, LstmLmConfig, LstmLmCore};
use crate::classifiers::neural::BinaryNet;
use crate::classifiers::spec::TrainablePart;
use crate::error::{ModelError, Result};
use crate::nn::{dropout, masked_max, masked_mean, Params};

const HEAD_DROPOUT: f32 = 0.1;

/// Recurrent language model with a pooled classification head on top.
pub(crate) struct UlmfitNet {
    params: Params,
    core: LstmLmCore,
    head: Linear,
    hidden: usize,
}

impl UlmfitNet {
    pub fn new(config: &LstmLmConfig, vocab_len: usize, seed: u64) -> Result<UlmfitNet> {
        let mut params = Params::new(seed);
        let core = LstmLmCore::new(&mut params, config, vocab_len)?;
        let head = params.linear("head", 3 * config.hidden, 1)?;
        Ok(UlmfitNet { params, core, head, hidden: config.hidden })
    }

    pub fn from_backbone(backbone: &Backbone, seed: u64) -> Result<UlmfitNet> {
        let BackboneConfig::LstmLm(config) = &backbone.config else {
            return Err(ModelError::Config(format!("backbone `{}` is not a recurrent language model", backbone.name)));
        };
        let net = UlmfitNet::new(config, backbone.vocab.len(), seed)?;
        let copied = net.params.load_from(&backbone.tensors)?;
        if copied + 2 != net.params.names().len() {
            return Err(ModelError::Checkpoint(format!("backbone `{}` is missing encoder weights", backbone.name)));
        }
        Ok(net)
    }

    pub fn trainable(&self, part: TrainablePart) -> Vec<Var> {
        match part {
            TrainablePart::Recurrent => self.params.with_prefixes(&["lm.lstm."]),
            TrainablePart::All => self.params.all(),
            TrainablePart::Head => self.params.with_prefixes(&["head."]),
        }
    }
}

impl BinaryNet for UlmfitNet {
    fn params(&self) -> &Params {
        &self.params
    }

    fn logits(&self, ids: &Tensor, mask: &Tensor, mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let (h, last) = self.core.forward(ids, mask, rng.as_deref_mut())?;
        let mut pooled = Tensor::cat(&[last, masked_mean(&h, mask)?, masked_max(&h, mask)?], 1)?;
        if let Some(rng) = rng {
            let b = ids.dim(0)?;
            pooled = dropout(&pooled, HEAD_DROPOUT, &[b, 3 * self.hidden], rng)?;
        }
        Ok(self.head.forward(&pooled)?.squeeze(1)?)
    }
}

/// Transformer encoder with concatenated mean and max pooling and a linear head.
pub(crate) struct EncoderClassifier {
    params: Params,
    core: EncoderCore,
    head: Linear,
}

impl EncoderClassifier {
    pub fn new(config: &EncoderConfig, vocab_len: usize, seed: u64) -> Result<EncoderClassifier> {
        let mut params = Params::new(seed);
        let core = EncoderCore::new(&mut params, config, vocab_len)?;
        let head = params.linear_normal("head", 2 * config.d_model, 1, 0.02)?;
        Ok(EncoderClassifier { params, core, head })
    }

    pub fn from_backbone(backbone: &Backbone, seed: u64) -> Result<EncoderClassifier> {
        let BackboneConfig::Encoder(config) = &backbone.config else {
            return Err(ModelError::Config(format!("backbone `{}` is not a transformer encoder", backbone.name)));
        };
        let net = EncoderClassifier::new(config, backbone.vocab.len(), seed)?;
        let copied = net.params.load_from(&backbone.tensors)?;
        if copied + 2 != net.params.names().len() {
            return Err(ModelError::Checkpoint(format!("backbone `{}` is missing encoder weights", backbone.name)));
        }
        Ok(net)
    }

    pub fn max_len(&self) -> usize {
        self.core.config().max_len
    }
}

impl BinaryNet for EncoderClassifier {
    fn params(&self) -> &Params {
        &self.params
    }

    fn logits(&self, ids: &Tensor, mask: &Tensor, mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let h = self.core.forward(ids, mask, rng.as_deref_mut())?;
        let t = h.dim(1)?;
        let mask = mask.narrow(1, 0, t)?;
        let mut pooled = Tensor::cat(&[masked_mean(&h, &mask)?, masked_max(&h, &mask)?], 1)?;
        if let Some(rng) = rng {
            let (b, d) = pooled.dims2()?;
            pooled = dropout(&pooled, HEAD_DROPOUT, &[b, d], rng)?;
        }
        Ok(self.head.forward(&pooled)?.squeeze(1)?)
    }
}
