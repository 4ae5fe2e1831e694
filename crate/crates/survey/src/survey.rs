use std::collections::HashSet;

use headcheck_core::{Label, LabeledExample};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SurveyError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurveyConfig {
    pub id: String,
    pub sets: usize,
    pub per_set: usize,
    /// Generated items drawn first; the remaining slots are random draws from either class.
    pub generated: usize,
    pub real: usize,
    pub seed: u64,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        SurveyConfig { id: "headlines".into(), sets: 3, per_set: 31, generated: 45, real: 30, seed: 0 }
    }
}

impl SurveyConfig {
    pub fn total(&self) -> usize {
        self.sets * self.per_set
    }
}

/// A survey item. The label is operator-side only and is never sent to participants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyItem {
    pub headline_id: String,
    pub text: String,
    pub label: Label,
    /// 1-based set number.
    pub set: usize,
}

/// How the items were drawn, recorded alongside the survey.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    pub drawn_generated: usize,
    pub drawn_real: usize,
    pub extra_generated: usize,
    pub extra_real: usize,
}

impl Composition {
    pub fn generated(&self) -> usize {
        self.drawn_generated + self.extra_generated
    }

    pub fn real(&self) -> usize {
        self.drawn_real + self.extra_real
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Survey {
    pub id: String,
    pub seed: u64,
    pub sets: usize,
    pub per_set: usize,
    pub items: Vec<SurveyItem>,
    pub composition: Composition,
}

impl Survey {
    pub fn item(&self, headline_id: &str) -> Option<&SurveyItem> {
        self.items.iter().find(|i| i.headline_id == headline_id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// The presentation order (indices into `items`) for one session.
    pub fn session_order(&self, session_id: &str) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(session_id.as_bytes()));
        let mut order: Vec<usize> = (0..self.items.len()).collect();
        order.shuffle(&mut rng);
        order
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3))
}

/// Samples a survey without replacement from a labelled pool.
pub fn create_survey(pool: &[LabeledExample], config: &SurveyConfig) -> Result<Survey> {
    let total = config.total();
    if total == 0 {
        return Err(SurveyError::Config("survey must have at least one item".into()));
    }
    if config.generated + config.real > total {
        return Err(SurveyError::Config(format!(
            "{} generated + {} real exceeds {total} items",
            config.generated, config.real
        )));
    }
    let mut seen = HashSet::new();
    let pool: Vec<&LabeledExample> = pool.iter().filter(|e| seen.insert(e.text.as_str())).collect();
    if pool.len() < total {
        return Err(SurveyError::InsufficientPool { needed: total, available: pool.len() });
    }
    let (mut generated, mut real): (Vec<&LabeledExample>, Vec<&LabeledExample>) =
        pool.into_iter().partition(|e| e.label == Label::Generated);
    if generated.is_empty() || real.is_empty() {
        return Err(SurveyError::SingleLabelPool);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    generated.shuffle(&mut rng);
    real.shuffle(&mut rng);
    let take_gen = config.generated.min(generated.len());
    let take_real = config.real.min(real.len());
    let mut picked: Vec<&LabeledExample> = generated.drain(..take_gen).chain(real.drain(..take_real)).collect();
    let mut rest: Vec<&LabeledExample> = generated.into_iter().chain(real).collect();
    rest.shuffle(&mut rng);
    let extra: Vec<&LabeledExample> = rest.into_iter().take(total - picked.len()).collect();
    let extra_generated = extra.iter().filter(|e| e.label == Label::Generated).count();
    let composition = Composition {
        drawn_generated: take_gen,
        drawn_real: take_real,
        extra_generated,
        extra_real: extra.len() - extra_generated,
    };
    picked.extend(extra);
    picked.shuffle(&mut rng);

    let items = picked
        .into_iter()
        .enumerate()
        .map(|(i, e)| SurveyItem {
            headline_id: format!("h{:03}", i + 1),
            text: e.text.clone(),
            label: e.label,
            set: i / config.per_set + 1,
        })
        .collect();
    Ok(Survey {
        id: config.id.clone(),
        seed: config.seed,
        sets: config.sets,
        per_set: config.per_set,
        items,
        composition,
    })
}
