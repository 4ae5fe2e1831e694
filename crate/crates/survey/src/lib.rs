//! Human judgment surveys over real and generated headlines.
//!
//! A [`Survey`] is a fixed, seeded sample of labelled headlines. Participants
//! get anonymous sessions, see every item once in their own random order and
//! answer "real" or "generated". Judgments go to an append-only log from which
//! every aggregate is recomputed.

pub mod aggregate;
mod error;
pub mod server;
pub mod store;
pub mod survey;

pub use aggregate::{aggregate, SurveyAggregate};
pub use error::SurveyError;
pub use store::SurveyStore;
pub use survey::{create_survey, Survey, SurveyConfig, SurveyItem};
