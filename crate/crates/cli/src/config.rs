//! Run configuration: one TOML file plus command-line overrides.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use headcheck_core::evaluation::RUNS_PER_EXPERIMENT;
use headcheck_models::classifiers::{ClassifierSpec, EncoderConfig, LstmLmConfig, PretrainOptions, TABLE_ROWS};
use headcheck_models::generator::{FinetuneOptions, GptConfig};
use headcheck_survey::SurveyConfig;
use serde::{Deserialize, Serialize};

use crate::UserError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// `publish_date,headline_text` CSV of real headlines.
    pub corpus: PathBuf,
    pub out: PathBuf,
    /// Optional `word<TAB>TAG` lexicon layered over the built-in tagger.
    pub tagger_lexicon: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { corpus: PathBuf::from("data/abcnews-date-text.csv"), out: PathBuf::from("runs/default"), tagger_lexicon: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub vocab_size: usize,
    pub model: GptConfig,
    pub temperature: f64,
    pub max_tokens: usize,
    /// Generated headlines per era; `None` matches the era's real count.
    pub defender_count: Option<usize>,
    pub attacker_count: Option<usize>,
}

impl Default for GenerationSection {
    fn default() -> Self {
        let f = FinetuneOptions::default();
        GenerationSection {
            seed: 0,
            epochs: f.epochs,
            lr: f.lr,
            batch_size: f.batch_size,
            vocab_size: f.vocab_size,
            model: f.model,
            temperature: 0.9,
            max_tokens: 24,
            defender_count: None,
            attacker_count: None,
        }
    }
}

impl GenerationSection {
    pub fn finetune_options(&self, seed: u64) -> FinetuneOptions {
        FinetuneOptions {
            epochs: self.epochs,
            seed,
            lr: self.lr,
            batch_size: self.batch_size,
            vocab_size: self.vocab_size,
            model: self.model.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub seed: u64,
    pub balance_ratio: Option<f64>,
    /// Cap on real headlines per era, drawn with `seed`. Useful for desk-scale runs.
    pub real_limit_per_era: Option<usize>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection { seed: 0, balance_ratio: Some(1.0), real_limit_per_era: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub seed: u64,
    pub epochs: usize,
    pub distill_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub vocab_size: usize,
    pub lstm: LstmLmConfig,
    pub encoder: EncoderConfig,
}

impl Default for PretrainSection {
    fn default() -> Self {
        let p = PretrainOptions::default();
        PretrainSection {
            seed: p.seed,
            epochs: p.epochs,
            distill_epochs: p.epochs,
            lr: p.lr,
            batch_size: p.batch_size,
            vocab_size: p.vocab_size,
            lstm: LstmLmConfig::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

impl PretrainSection {
    pub fn options(&self, epochs: usize) -> PretrainOptions {
        PretrainOptions { epochs, seed: self.seed, lr: self.lr, batch_size: self.batch_size, vocab_size: self.vocab_size }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    /// Table row names, in the order they should be trained and reported.
    pub specs: Vec<String>,
    pub seeds: Vec<u64>,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        ClassifierSection { specs: TABLE_ROWS.iter().map(|s| s.to_string()).collect(), seeds: vec![1, 2, 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurveySection {
    #[serde(flatten)]
    pub survey: SurveyConfig,
    pub threshold: f64,
    pub bind: String,
    pub operator_token: Option<String>,
}

impl Default for SurveySection {
    fn default() -> Self {
        SurveySection {
            survey: SurveyConfig::default(),
            threshold: headcheck_survey::aggregate::DEFAULT_THRESHOLD,
            bind: "127.0.0.1:8080".into(),
            operator_token: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub top_words: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection { top_words: headcheck_core::analysis::DEFAULT_TOP_WORDS }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub generation: GenerationSection,
    pub dataset: DatasetSection,
    pub pretrain: PretrainSection,
    pub classifiers: ClassifierSection,
    pub survey: SurveySection,
    pub analysis: AnalysisSection,
}

/// Values given on the command line; each one replaces its file counterpart.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub specs: Vec<String>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, UserError> {
        toml::from_str(text).map_err(|e| UserError(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<RunConfig, UserError> {
        let text = fs::read_to_string(path).map_err(|e| UserError(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// `--seed` sets every seed in the file: generation, dataset, pretraining,
    /// survey, and the evaluation seeds become `seed, seed+1, seed+2`.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.generation.seed = seed;
            self.dataset.seed = seed;
            self.pretrain.seed = seed;
            self.survey.survey.seed = seed;
            self.classifiers.seeds = (0..RUNS_PER_EXPERIMENT as u64).map(|i| seed + i).collect();
        }
        if let Some(out) = &o.out {
            self.paths.out = out.clone();
        }
        if let Some(corpus) = &o.corpus {
            self.paths.corpus = corpus.clone();
        }
        if !o.specs.is_empty() {
            self.classifiers.specs = o.specs.clone();
        }
    }

    pub fn validate(&self) -> Result<(), UserError> {
        if self.classifiers.specs.is_empty() {
            return Err(UserError("no classifier specs selected".into()));
        }
        for name in &self.classifiers.specs {
            ClassifierSpec::by_name(name).map_err(|e| UserError(e.to_string()))?;
        }
        let distinct: HashSet<_> = self.classifiers.specs.iter().collect();
        if distinct.len() != self.classifiers.specs.len() {
            return Err(UserError("a classifier spec is selected twice".into()));
        }
        let seeds: HashSet<_> = self.classifiers.seeds.iter().collect();
        if self.classifiers.seeds.len() != RUNS_PER_EXPERIMENT || seeds.len() != RUNS_PER_EXPERIMENT {
            return Err(UserError(format!("exactly {RUNS_PER_EXPERIMENT} distinct evaluation seeds are required")));
        }
        if !(self.generation.temperature > 0.0 && self.generation.temperature.is_finite()) {
            return Err(UserError("generation.temperature must be positive".into()));
        }
        if self.generation.max_tokens == 0 {
            return Err(UserError("generation.max_tokens must be at least 1".into()));
        }
        if let Some(r) = self.dataset.balance_ratio {
            if !(r > 0.0 && r.is_finite()) {
                return Err(UserError("dataset.balance_ratio must be positive".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.survey.threshold) {
            return Err(UserError("survey.threshold must lie in [0, 1]".into()));
        }
        if let Some(lex) = &self.paths.tagger_lexicon {
            if !lex.is_file() {
                return Err(UserError(format!("tagger lexicon not found: {}", lex.display())));
            }
        }
        Ok(())
    }

    pub fn selected_specs(&self) -> Vec<(String, ClassifierSpec)> {
        self.classifiers
            .specs
            .iter()
            .map(|n| (n.clone(), ClassifierSpec::by_name(n).expect("validated")))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
