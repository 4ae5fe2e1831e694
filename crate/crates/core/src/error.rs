use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("corpus not found: {0}")]
    CorpusNotFound(PathBuf),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("bad corpus header: expected `publish_date,headline_text`, found `{0}`")]
    BadHeader(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("tagger returned {got} tags for {expected} tokens")]
    TagLengthMismatch { expected: usize, got: usize },
    #[error("length mismatch: {predictions} predictions for {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
