//! Correctness statistics over human judgments.

use std::collections::{HashMap, HashSet};

use headcheck_core::evaluation::{metrics, ConfusionCounts, Metrics};
use headcheck_core::Label;
use serde::{Deserialize, Serialize};

use crate::store::Judgment;
use crate::survey::Survey;

pub const DEFAULT_THRESHOLD: f64 = 0.80;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: u64,
    pub answers: u64,
    /// correct / answers, 0 when there are no answers.
    pub fraction: f64,
}

impl Tally {
    fn new(correct: u64, answers: u64) -> Tally {
        let fraction = if answers == 0 { 0.0 } else { correct as f64 / answers as f64 };
        Tally { correct, answers, fraction }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadlineTally {
    pub headline_id: String,
    pub label: Label,
    pub text: String,
    pub shown_count: u64,
    pub correct_count: u64,
    pub correct_fraction: f64,
    /// Majority verdict: more than half of the judgments were correct.
    pub identified: bool,
}

/// Headline ids whose agreement strictly exceeds the threshold.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdLists {
    pub threshold: f64,
    /// Generated headlines judged generated by more than `threshold` of answers.
    pub generated_detected: Vec<String>,
    /// Generated headlines judged real by more than `threshold` of answers.
    pub generated_fooled: Vec<String>,
    /// Real headlines judged real by more than `threshold` of answers.
    pub real_recognized: Vec<String>,
    /// Real headlines judged generated by more than `threshold` of answers.
    pub real_doubted: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifiedCount {
    pub identified: usize,
    /// Headlines of this class with at least one judgment.
    pub presented: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyAggregate {
    pub survey_id: String,
    pub participants: usize,
    pub total_answers: u64,
    pub total_correct: u64,
    pub overall: Tally,
    pub on_generated: Tally,
    pub on_real: Tally,
    pub per_headline: Vec<HeadlineTally>,
    pub identified_generated: IdentifiedCount,
    pub identified_real: IdentifiedCount,
    pub threshold_lists: ThresholdLists,
    /// No judgments yet; every fraction above is a zero placeholder.
    pub zero_judgments: bool,
}

/// Recomputes every statistic from the survey definition and its judgments.
pub fn aggregate(survey: &Survey, judgments: &[Judgment], threshold: f64) -> SurveyAggregate {
    let mut per_item: HashMap<&str, (u64, u64)> = HashMap::new();
    let mut sessions = HashSet::new();
    let (mut gen_correct, mut gen_answers, mut real_correct, mut real_answers) = (0u64, 0u64, 0u64, 0u64);
    let labels: HashMap<&str, Label> = survey.items.iter().map(|i| (i.headline_id.as_str(), i.label)).collect();

    for j in judgments {
        let Some(&label) = labels.get(j.headline_id.as_str()) else { continue };
        sessions.insert(j.session_id.as_str());
        let correct = j.answer == label;
        let entry = per_item.entry(j.headline_id.as_str()).or_default();
        entry.0 += 1;
        entry.1 += u64::from(correct);
        match label {
            Label::Generated => {
                gen_answers += 1;
                gen_correct += u64::from(correct);
            }
            Label::Real => {
                real_answers += 1;
                real_correct += u64::from(correct);
            }
        }
    }

    let mut lists = ThresholdLists { threshold, ..Default::default() };
    let mut identified_generated = IdentifiedCount::default();
    let mut identified_real = IdentifiedCount::default();
    let per_headline: Vec<HeadlineTally> = survey
        .items
        .iter()
        .map(|item| {
            let (shown, correct) = per_item.get(item.headline_id.as_str()).copied().unwrap_or((0, 0));
            let tally = Tally::new(correct, shown);
            let identified = shown > 0 && tally.fraction > 0.5;
            if shown > 0 {
                let counter = match item.label {
                    Label::Generated => &mut identified_generated,
                    Label::Real => &mut identified_real,
                };
                counter.presented += 1;
                counter.identified += usize::from(identified);
                let wrong_fraction = Tally::new(shown - correct, shown).fraction;
                let id = item.headline_id.clone();
                match item.label {
                    Label::Generated if tally.fraction > threshold => lists.generated_detected.push(id),
                    Label::Generated if wrong_fraction > threshold => lists.generated_fooled.push(id),
                    Label::Real if tally.fraction > threshold => lists.real_recognized.push(id),
                    Label::Real if wrong_fraction > threshold => lists.real_doubted.push(id),
                    _ => {}
                }
            }
            HeadlineTally {
                headline_id: item.headline_id.clone(),
                label: item.label,
                text: item.text.clone(),
                shown_count: shown,
                correct_count: correct,
                correct_fraction: tally.fraction,
                identified,
            }
        })
        .collect();

    let total_answers = gen_answers + real_answers;
    let total_correct = gen_correct + real_correct;
    SurveyAggregate {
        survey_id: survey.id.clone(),
        participants: sessions.len(),
        total_answers,
        total_correct,
        overall: Tally::new(total_correct, total_answers),
        on_generated: Tally::new(gen_correct, gen_answers),
        on_real: Tally::new(real_correct, real_answers),
        per_headline,
        identified_generated,
        identified_real,
        threshold_lists: lists,
        zero_judgments: total_answers == 0,
    }
}

impl SurveyAggregate {
    /// Judgments as a confusion matrix with "generated" as the positive class.
    pub fn as_confusion(&self) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.on_generated.correct,
            fn_: self.on_generated.answers - self.on_generated.correct,
            tn: self.on_real.correct,
            fp: self.on_real.answers - self.on_real.correct,
        }
    }

    /// The human row of the results table, under the positive-class definitions.
    pub fn human_metrics(&self) -> Metrics {
        metrics(&self.as_confusion())
    }

    /// `headline_id,label,shown_count,correct_count`
    pub fn per_headline_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(["headline_id", "label", "shown_count", "correct_count"]).expect("in-memory csv");
        for h in &self.per_headline {
            w.write_record([h.headline_id.as_str(), h.label.as_str(), &h.shown_count.to_string(), &h.correct_count.to_string()])
                .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }
}
