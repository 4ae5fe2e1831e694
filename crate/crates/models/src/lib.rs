//! Neural and statistical models: the headline generator and the detector ladder.

mod error;
pub mod classifiers;
pub mod generator;
pub mod nn;
pub mod vocab;

pub use error::{ModelError, Result};
pub use vocab::{build_vocab, encode, VocabIndex};
