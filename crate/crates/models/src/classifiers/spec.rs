//! Architecture and hyperparameter descriptions for each detector.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::nn::Schedule;

pub const DEFAULT_MAX_LEN: usize = 24;
pub const DEFAULT_VOCAB_SIZE: usize = 20_000;

/// Backbone identifiers understood by [`crate::classifiers::Backbones`].
pub const LSTM_LM: &str = "lstm-lm";
pub const ENCODER_BASE: &str = "encoder-base";
pub const ENCODER_DISTILLED: &str = "encoder-distilled";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesSpec {
    pub alpha: f64,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetSpec {
    /// Share of the penalty that is L1.
    pub l1_ratio: f64,
    /// Candidate penalty strengths; the one with the best dev accuracy is kept.
    pub strengths: Vec<f64>,
    pub iterations: usize,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub name: String,
    pub lr: f64,
    pub batch_size: usize,
}

impl OptimizerSpec {
    fn adam() -> OptimizerSpec {
        OptimizerSpec { name: "adam".into(), lr: 1e-3, batch_size: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnSpec {
    /// Output channels of the first and second convolution.
    pub filters: [usize; 2],
    pub kernel_size: usize,
    pub embed_dim: usize,
    pub epochs: usize,
    pub optimizer: OptimizerSpec,
    pub max_len: usize,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstmSpec {
    pub units: usize,
    pub embed_dim: usize,
    /// Whole embedding channels dropped per example during training.
    pub spatial_dropout: f32,
    pub epochs: usize,
    pub optimizer: OptimizerSpec,
    pub max_len: usize,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstmAttentionSpec {
    #[serde(flatten)]
    pub recurrent: BiLstmSpec,
    /// Hidden size of the additive attention scorer.
    pub attention_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainablePart {
    /// Recurrent weights only.
    Recurrent,
    All,
    /// Classification head only.
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub trainable: TrainablePart,
    pub lr: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlmfitSpec {
    pub backbone: String,
    pub stages: Vec<StageSpec>,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerSpec {
    pub backbone: String,
    pub lr: f64,
    pub epochs: usize,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub max_len: usize,
}

/// One detector configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    NaiveBayes(NaiveBayesSpec),
    ElasticNet(ElasticNetSpec),
    Cnn(CnnSpec),
    Bilstm(BiLstmSpec),
    BilstmAttention(BiLstmAttentionSpec),
    Ulmfit(UlmfitSpec),
    Transformer(TransformerSpec),
}

/// Row names of the results table, in table order.
pub const TABLE_ROWS: [&str; 8] =
    ["naive_bayes", "elastic_net", "cnn", "bilstm", "bilstm_attention", "ulmfit", "bert", "distilbert"];

impl ClassifierSpec {
    pub fn naive_bayes() -> ClassifierSpec {
        ClassifierSpec::NaiveBayes(NaiveBayesSpec { alpha: 1.0, vocab_size: DEFAULT_VOCAB_SIZE })
    }

    pub fn elastic_net() -> ClassifierSpec {
        ClassifierSpec::ElasticNet(ElasticNetSpec {
            l1_ratio: 0.5,
            strengths: vec![3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4],
            iterations: 300,
            vocab_size: DEFAULT_VOCAB_SIZE,
        })
    }

    pub fn cnn() -> ClassifierSpec {
        ClassifierSpec::Cnn(CnnSpec {
            filters: [8, 4],
            kernel_size: 3,
            embed_dim: 75,
            epochs: 5,
            optimizer: OptimizerSpec::adam(),
            max_len: DEFAULT_MAX_LEN,
            vocab_size: DEFAULT_VOCAB_SIZE,
        })
    }

    fn recurrent() -> BiLstmSpec {
        BiLstmSpec {
            units: 35,
            embed_dim: 100,
            spatial_dropout: 0.33,
            epochs: 5,
            optimizer: OptimizerSpec::adam(),
            max_len: DEFAULT_MAX_LEN,
            vocab_size: DEFAULT_VOCAB_SIZE,
        }
    }

    pub fn bilstm() -> ClassifierSpec {
        ClassifierSpec::Bilstm(Self::recurrent())
    }

    pub fn bilstm_attention() -> ClassifierSpec {
        ClassifierSpec::BilstmAttention(BiLstmAttentionSpec { recurrent: Self::recurrent(), attention_dim: 35 })
    }

    pub fn ulmfit() -> ClassifierSpec {
        ClassifierSpec::Ulmfit(UlmfitSpec {
            backbone: LSTM_LM.into(),
            stages: vec![
                StageSpec { trainable: TrainablePart::Recurrent, lr: 0.01, epochs: 1 },
                StageSpec { trainable: TrainablePart::All, lr: 7.5e-5, epochs: 1 },
                StageSpec { trainable: TrainablePart::Head, lr: 0.05, epochs: 1 },
            ],
            schedule: Schedule::OneCycle,
            batch_size: 32,
            max_len: DEFAULT_MAX_LEN,
        })
    }

    fn transformer(backbone: &str) -> ClassifierSpec {
        ClassifierSpec::Transformer(TransformerSpec {
            backbone: backbone.into(),
            lr: 4e-5,
            epochs: 1,
            schedule: Schedule::Constant,
            batch_size: 8,
            max_len: DEFAULT_MAX_LEN,
        })
    }

    pub fn bert() -> ClassifierSpec {
        Self::transformer(ENCODER_BASE)
    }

    pub fn distilbert() -> ClassifierSpec {
        Self::transformer(ENCODER_DISTILLED)
    }

    /// Default spec for a results-table row name.
    pub fn by_name(name: &str) -> Result<ClassifierSpec> {
        Ok(match name {
            "naive_bayes" => Self::naive_bayes(),
            "elastic_net" => Self::elastic_net(),
            "cnn" => Self::cnn(),
            "bilstm" => Self::bilstm(),
            "bilstm_attention" => Self::bilstm_attention(),
            "ulmfit" => Self::ulmfit(),
            "bert" => Self::bert(),
            "distilbert" => Self::distilbert(),
            other => {
                return Err(ModelError::Config(format!(
                    "unknown classifier `{other}` (expected one of {})",
                    TABLE_ROWS.join(", ")
                )))
            }
        })
    }

    /// All eight default specs in table order.
    pub fn table_rows() -> Vec<(&'static str, ClassifierSpec)> {
        TABLE_ROWS.iter().map(|&n| (n, Self::by_name(n).expect("known row"))).collect()
    }

    /// Display label for tables.
    pub fn display_name(row: &str) -> &'static str {
        match row {
            "naive_bayes" => "Naive Bayes",
            "elastic_net" => "Elastic Net",
            "cnn" => "CNN",
            "bilstm" => "BiLSTM",
            "bilstm_attention" => "BiLSTM/Att.",
            "ulmfit" => "ULMFit",
            "bert" => "BERT",
            "distilbert" => "DistilBERT",
            _ => "?",
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ClassifierSpec::NaiveBayes(_) => "naive_bayes",
            ClassifierSpec::ElasticNet(_) => "elastic_net",
            ClassifierSpec::Cnn(_) => "cnn",
            ClassifierSpec::Bilstm(_) => "bilstm",
            ClassifierSpec::BilstmAttention(_) => "bilstm_attention",
            ClassifierSpec::Ulmfit(_) => "ulmfit",
            ClassifierSpec::Transformer(_) => "transformer",
        }
    }

    /// The pretrained backbone this spec needs, if any.
    pub fn backbone(&self) -> Option<&str> {
        match self {
            ClassifierSpec::Ulmfit(s) => Some(&s.backbone),
            ClassifierSpec::Transformer(s) => Some(&s.backbone),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::Config(format!("{}: {m}", self.kind())));
        match self {
            ClassifierSpec::NaiveBayes(s) if !(s.alpha > 0.0) => bad("alpha must be positive"),
            ClassifierSpec::ElasticNet(s) if !(0.0..=1.0).contains(&s.l1_ratio) => bad("l1_ratio must be in [0, 1]"),
            ClassifierSpec::ElasticNet(s) if s.strengths.is_empty() || s.strengths.iter().any(|&l| !(l >= 0.0)) => {
                bad("strengths must be a non-empty list of non-negative values")
            }
            ClassifierSpec::Cnn(s) if s.epochs == 0 || s.kernel_size == 0 || s.filters.contains(&0) => {
                bad("epochs, kernel size and filters must be positive")
            }
            ClassifierSpec::Bilstm(s) | ClassifierSpec::BilstmAttention(BiLstmAttentionSpec { recurrent: s, .. })
                if s.epochs == 0 || s.units == 0 || !(0.0..1.0).contains(&s.spatial_dropout) =>
            {
                bad("epochs and units must be positive, dropout in [0, 1)")
            }
            ClassifierSpec::Ulmfit(s) if s.stages.is_empty() => bad("at least one stage is required"),
            ClassifierSpec::Transformer(s) if s.epochs == 0 || !(s.lr > 0.0) => bad("epochs and lr must be positive"),
            _ => Ok(()),
        }
    }
}
