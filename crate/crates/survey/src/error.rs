#[derive(Debug, thiserror::Error)]
pub enum SurveyError {
    #[error("insufficient pool: need {needed} headlines, have {available}")]
    InsufficientPool { needed: usize, available: usize },
    #[error("pool must contain both real and generated headlines")]
    SingleLabelPool,
    #[error("invalid survey configuration: {0}")]
    Config(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("headline `{0}` is not part of this survey")]
    UnknownHeadline(String),
    #[error("already answered")]
    AlreadyAnswered,
    #[error("validation error: {0}")]
    Validation(String),
    #[error("corrupt judgment log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SurveyError> = std::result::Result<T, E>;
