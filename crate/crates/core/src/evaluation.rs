//! Detector metrics with "generated" as the positive class, multi-seed
//! experiments, and misclassification reports.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetBundle, Label, LabeledExample};
use crate::error::{CoreError, Result};

/// Number of seeded runs per experiment.
pub const RUNS_PER_EXPERIMENT: usize = 3;

/// A detector decision: `score` is the probability of the generated class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub score: f64,
}

impl Prediction {
    pub const THRESHOLD: f64 = 0.5;

    pub fn from_score(score: f64) -> Prediction {
        let score = score.clamp(0.0, 1.0);
        let label = if score >= Self::THRESHOLD { Label::Generated } else { Label::Real };
        Prediction { label, score }
    }
}

/// Anything that can score headlines.
pub trait Predictor {
    type Error: std::error::Error + Send + Sync + 'static;

    fn predict(&self, texts: &[String]) -> std::result::Result<Vec<Prediction>, Self::Error>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, predicted: Label, gold: Label) {
        match (predicted, gold) {
            (Label::Generated, Label::Generated) => self.tp += 1,
            (Label::Generated, Label::Real) => self.fp += 1,
            (Label::Real, Label::Generated) => self.fn_ += 1,
            (Label::Real, Label::Real) => self.tn += 1,
        }
    }
}

pub fn confusion(predicted: &[Label], gold: &[Label]) -> Result<ConfusionCounts> {
    if predicted.len() != gold.len() {
        return Err(CoreError::LengthMismatch { predictions: predicted.len(), gold: gold.len() });
    }
    if gold.is_empty() {
        return Err(CoreError::EmptyInput("confusion needs at least one example"));
    }
    let mut c = ConfusionCounts::default();
    for (p, g) in predicted.iter().zip(gold) {
        c.record(*p, *g);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Generated-class precision: tp / (tp + fp).
    pub precision: f64,
    /// Generated-class recall: tp / (tp + fn).
    pub recall: f64,
    /// Set when tp + fp = 0 and precision was reported as 0.
    pub precision_undefined: bool,
    /// Set when tp + fn = 0 and recall was reported as 0.
    pub recall_undefined: bool,
    /// Mean of the per-class precisions (zero rule applies per class).
    pub macro_precision: f64,
    pub macro_recall: f64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let (accuracy, _) = ratio(c.tp + c.tn, c.total());
    let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
    let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
    let (real_precision, _) = ratio(c.tn, c.tn + c.fn_);
    let (real_recall, _) = ratio(c.tn, c.tn + c.fp);
    Metrics {
        accuracy,
        precision,
        recall,
        precision_undefined,
        recall_undefined,
        macro_precision: (precision + real_precision) / 2.0,
        macro_recall: (recall + real_recall) / 2.0,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

impl From<&Metrics> for MetricTriple {
    fn from(m: &Metrics) -> Self {
        MetricTriple { accuracy: m.accuracy, precision: m.precision, recall: m.recall }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub confusion: ConfusionCounts,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub dataset_hash: String,
    pub per_run: Vec<RunResult>,
    pub mean: MetricTriple,
    /// Population standard deviation over `per_run`.
    pub std: MetricTriple,
    pub macro_precision_mean: f64,
    pub macro_recall_mean: f64,
    /// True if any run hit the zero-denominator rule.
    pub zero_denominator: bool,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn from_runs(model: &str, dataset_hash: &str, per_run: Vec<RunResult>) -> EvalReport {
        assert!(!per_run.is_empty(), "an evaluation report needs at least one run");
        let col = |f: fn(&Metrics) -> f64| per_run.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>();
        let (acc_m, acc_s) = mean_std(&col(|m| m.accuracy));
        let (p_m, p_s) = mean_std(&col(|m| m.precision));
        let (r_m, r_s) = mean_std(&col(|m| m.recall));
        let (mp, _) = mean_std(&col(|m| m.macro_precision));
        let (mr, _) = mean_std(&col(|m| m.macro_recall));
        let zero_denominator = per_run.iter().any(|r| r.metrics.precision_undefined || r.metrics.recall_undefined);
        EvalReport {
            model: model.to_string(),
            dataset_hash: dataset_hash.to_string(),
            per_run,
            mean: MetricTriple { accuracy: acc_m, precision: p_m, recall: r_m },
            std: MetricTriple { accuracy: acc_s, precision: p_s, recall: r_s },
            macro_precision_mean: mp,
            macro_recall_mean: mr,
            zero_denominator,
        }
    }
}

/// Scores `examples` with `predictor` and tabulates the confusion matrix.
pub fn evaluate<P: Predictor>(
    predictor: &P,
    examples: &[LabeledExample],
) -> std::result::Result<(ConfusionCounts, Vec<Prediction>), ExperimentError> {
    let texts: Vec<String> = examples.iter().map(|e| e.text.clone()).collect();
    let preds = predictor.predict(&texts).map_err(|e| ExperimentError::Predict(Box::new(e)))?;
    let predicted: Vec<Label> = preds.iter().map(|p| p.label).collect();
    let gold: Vec<Label> = examples.iter().map(|e| e.label).collect();
    let c = confusion(&predicted, &gold).map_err(ExperimentError::Core)?;
    Ok((c, preds))
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("experiment needs {RUNS_PER_EXPERIMENT} distinct seeds, got {0:?}")]
    Seeds(Vec<u64>),
    #[error("run with seed {seed} failed after {} completed runs: {source}", completed.len())]
    Run {
        seed: u64,
        completed: Vec<RunResult>,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("prediction failed: {0}")]
    Predict(Box<dyn std::error::Error + Send + Sync>),
    #[error(transparent)]
    Core(CoreError),
}

/// Trains once per seed, evaluates each fit on the bundle's test split and
/// aggregates mean/std per metric. A failing run aborts the experiment; runs
/// completed before it are returned inside the error.
pub fn run_experiment<P, E, F>(
    model: &str,
    bundle: &DatasetBundle,
    seeds: &[u64],
    mut train: F,
) -> std::result::Result<EvalReport, ExperimentError>
where
    P: Predictor,
    E: std::error::Error + Send + Sync + 'static,
    F: FnMut(u64) -> std::result::Result<P, E>,
{
    let distinct: HashSet<u64> = seeds.iter().copied().collect();
    if seeds.len() != RUNS_PER_EXPERIMENT || distinct.len() != seeds.len() {
        return Err(ExperimentError::Seeds(seeds.to_vec()));
    }
    let hash = bundle.content_hash();
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let outcome = train(seed)
            .map_err(|e| Box::new(e) as Box<dyn std::error::Error + Send + Sync>)
            .and_then(|model| evaluate(&model, &bundle.test).map_err(|e| Box::new(e) as _));
        match outcome {
            Ok((confusion, _)) => runs.push(RunResult { seed, confusion, metrics: metrics(&confusion) }),
            Err(source) => return Err(ExperimentError::Run { seed, completed: runs, source }),
        }
    }
    Ok(EvalReport::from_runs(model, &hash, runs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Misclassified {
    pub text: String,
    pub gold: Label,
    pub predicted: Label,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MisclassificationReport {
    /// Generated headlines predicted real, most confidently real first.
    pub generated_as_real: Vec<Misclassified>,
    /// Real headlines predicted generated, most confidently generated first.
    pub real_as_generated: Vec<Misclassified>,
}

impl MisclassificationReport {
    pub fn len(&self) -> usize {
        self.generated_as_real.len() + self.real_as_generated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn misclassification_report(
    examples: &[LabeledExample],
    predictions: &[Prediction],
    n: usize,
) -> Result<MisclassificationReport> {
    if examples.len() != predictions.len() {
        return Err(CoreError::LengthMismatch { predictions: predictions.len(), gold: examples.len() });
    }
    let wrong = |gold: Label| {
        examples
            .iter()
            .zip(predictions)
            .filter(move |(e, p)| e.label == gold && p.label != gold)
            .map(|(e, p)| Misclassified { text: e.text.clone(), gold: e.label, predicted: p.label, score: p.score })
            .collect::<Vec<_>>()
    };
    let mut generated_as_real = wrong(Label::Generated);
    generated_as_real.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.text.cmp(&b.text)));
    generated_as_real.truncate(n);
    let mut real_as_generated = wrong(Label::Real);
    real_as_generated.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.text.cmp(&b.text)));
    real_as_generated.truncate(n);
    Ok(MisclassificationReport { generated_as_real, real_as_generated })
}

/// One row of the results table; failed experiments keep their row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TableRow {
    Scored { method: String, mean: MetricTriple },
    Failed { method: String, reason: String },
}

impl TableRow {
    pub fn from_report(method: &str, report: &EvalReport) -> TableRow {
        TableRow::Scored { method: method.to_string(), mean: report.mean }
    }
}

/// Plain-text table with columns Method, Ovr. Acc., Precision, Recall (percent).
pub fn render_results_table(rows: &[TableRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<18} {:>9} {:>10} {:>8}", "Method", "Ovr. Acc.", "Precision", "Recall");
    for row in rows {
        match row {
            TableRow::Scored { method, mean } => {
                let _ = writeln!(
                    out,
                    "{:<18} {:>9.1} {:>10.1} {:>8.1}",
                    method,
                    mean.accuracy * 100.0,
                    mean.precision * 100.0,
                    mean.recall * 100.0
                );
            }
            TableRow::Failed { method, reason } => {
                let _ = writeln!(out, "{method:<18} {:>9} ({reason})", "FAILED");
            }
        }
    }
    out
}
