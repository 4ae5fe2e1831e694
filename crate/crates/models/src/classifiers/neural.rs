//! Shared machinery for the neural detectors: encoding, staged training with
//! parameter subsets, and batched scoring.

use candle_core::{Tensor, Var};
use candle_nn::Optimizer;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{adam, bce_with_logits, device, make_batch, scalar, shuffled_batches, sigmoid_scores, Params, Schedule};
use crate::vocab::{VocabIndex, PAD_ID, UNK_ID};

/// A network mapping padded token ids to one logit per row.
pub(crate) trait BinaryNet: Send + Sync {
    fn params(&self) -> &Params;
    /// `ids`, `mask`: (B, T). Training mode when `rng` is given.
    fn logits(&self, ids: &Tensor, mask: &Tensor, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor>;
}

/// Token ids for a classifier input. Never all padding: an empty text becomes
/// a single unknown token so pooling always sees one position.
pub(crate) fn encode_row(vocab: &VocabIndex, prefix: &[u32], text: &str, max_len: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = prefix.to_vec();
    ids.extend(vocab.ids_of(text));
    ids.truncate(max_len);
    if ids.is_empty() {
        ids.push(UNK_ID);
    }
    ids
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: usize,
    pub epoch: usize,
    pub lr_peak: f64,
    pub train_loss: f64,
    /// Accuracy on the development split (monitoring only).
    pub dev_accuracy: Option<f64>,
}

pub(crate) struct Stage {
    pub vars: Vec<Var>,
    pub lr: f64,
    pub epochs: usize,
    pub schedule: Schedule,
}

pub(crate) struct Encoded<'a> {
    pub rows: &'a [Vec<u32>],
    pub targets: &'a [f32],
}

/// Runs the stages in order on shuffled minibatches. The dev split is only
/// scored, never trained on.
pub(crate) fn fit(
    net: &dyn BinaryNet,
    train: Encoded<'_>,
    dev: Encoded<'_>,
    stages: Vec<Stage>,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<EpochRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    let mut log = Vec::new();
    for (si, stage) in stages.into_iter().enumerate() {
        let mut opt = adam(stage.vars, stage.lr)?;
        let per_epoch = train.rows.len().div_ceil(batch_size);
        let total = per_epoch * stage.epochs;
        let mut step = 0;
        for epoch in 0..stage.epochs {
            let mut loss_sum = 0.0;
            let mut seen = 0usize;
            for idx in shuffled_batches(train.rows.len(), batch_size, &mut rng) {
                opt.set_learning_rate(stage.schedule.lr(stage.lr, step, total));
                let rows: Vec<&[u32]> = idx.iter().map(|&i| train.rows[i].as_slice()).collect();
                let batch = make_batch(&rows)?;
                let y: Vec<f32> = idx.iter().map(|&i| train.targets[i]).collect();
                let y = Tensor::from_vec(y, idx.len(), &device())?;
                let logits = net.logits(&batch.ids, &batch.mask, Some(&mut rng))?;
                let loss = bce_with_logits(&logits, &y)?;
                opt.backward_step(&loss)?;
                loss_sum += scalar(&loss)? * idx.len() as f64;
                seen += idx.len();
                step += 1;
            }
            let dev_accuracy = if dev.rows.is_empty() {
                None
            } else {
                let scores = score_rows(net, dev.rows)?;
                let hits = scores.iter().zip(dev.targets).filter(|(s, &t)| (**s >= 0.5) == (t >= 0.5)).count();
                Some(hits as f64 / dev.rows.len() as f64)
            };
            let train_loss = loss_sum / seen.max(1) as f64;
            tracing::info!(stage = si, epoch, train_loss, ?dev_accuracy, "epoch finished");
            log.push(EpochRecord { stage: si, epoch, lr_peak: stage.lr, train_loss, dev_accuracy });
        }
    }
    Ok(log)
}

const SCORE_BATCH: usize = 256;

/// Probability of the generated class for each row, in eval mode.
pub(crate) fn score_rows(net: &dyn BinaryNet, rows: &[Vec<u32>]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows.len());
    // Sorting by length keeps padding low; scores are written back in order.
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by_key(|&i| rows[i].iter().filter(|&&t| t != PAD_ID).count());
    let mut scores = vec![0.0; rows.len()];
    for chunk in order.chunks(SCORE_BATCH) {
        let batch_rows: Vec<&[u32]> = chunk.iter().map(|&i| rows[i].as_slice()).collect();
        let batch = make_batch(&batch_rows)?;
        let s = sigmoid_scores(&net.logits(&batch.ids, &batch.mask, None)?)?;
        for (&i, v) in chunk.iter().zip(s) {
            scores[i] = v;
        }
    }
    out.extend(scores);
    Ok(out)
}
