//! Pipeline orchestration behind the `headcheck` binary.

pub mod commands;
pub mod config;

use headcheck_core::CoreError;
use headcheck_models::ModelError;
use headcheck_survey::SurveyError;

pub use config::{Overrides, RunConfig};

/// A problem with the invocation or its inputs rather than with the program.
#[derive(Debug)]
pub struct UserError(pub String);

impl std::fmt::Display for UserError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

pub const EXIT_OK: u8 = 0;
pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

fn core_is_usage(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::CorpusNotFound(_)
            | CoreError::EmptyCorpus
            | CoreError::BadHeader(_)
            | CoreError::EmptyInput(_)
            | CoreError::Config(_)
    )
}

/// 2 for user or configuration errors anywhere in the chain, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UserError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            if core_is_usage(e) {
                return EXIT_USAGE;
            }
        }
        if let Some(e) = cause.downcast_ref::<ModelError>() {
            match e {
                ModelError::Config(_) | ModelError::EmptyCorpus | ModelError::EraContamination(_) => return EXIT_USAGE,
                ModelError::Core(c) if core_is_usage(c) => return EXIT_USAGE,
                _ => {}
            }
        }
        if let Some(e) = cause.downcast_ref::<SurveyError>() {
            if matches!(e, SurveyError::Config(_) | SurveyError::InsufficientPool { .. } | SurveyError::SingleLabelPool) {
                return EXIT_USAGE;
            }
        }
    }
    EXIT_INTERNAL
}
