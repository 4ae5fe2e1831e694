//! Core data handling for the headline detection benchmark.
//!
//! This crate owns everything that does not need a neural backend: loading
//! and validating the dated headline corpus, the temporal defender/attacker
//! split, dataset bundling, linguistic profiling, and detector metrics.

pub mod analysis;
pub mod corpus;
mod error;
pub mod evaluation;
pub mod tagger;
pub mod text;

pub use corpus::{DatasetBundle, Era, Headline, Label, LabeledExample, Split};
pub use error::{CoreError, Result};
pub use evaluation::{ConfusionCounts, EvalReport, Metrics, Prediction, Predictor};
