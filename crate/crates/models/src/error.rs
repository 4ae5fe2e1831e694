use headcheck_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("tensor backend error: {0}")]
    Candle(#[from] candle_core::Error),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("era contamination: {0}")]
    EraContamination(String),
    #[error("degenerate training set: {0}")]
    DegenerateTrainingSet(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("pretrained backbone `{0}` is not available")]
    MissingBackbone(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
