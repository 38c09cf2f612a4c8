use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants split into two families: configuration problems (bad flags,
/// out-of-range parameters) and data problems (empty input, malformed
/// files, too few records). [`Error::is_config`] tells them apart so a
/// front end can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input is empty after normalization")]
    EmptyInput,
    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),
    #[error("n-gram order must be at least 1, got {0}")]
    BadOrder(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),
    #[error("no valid records in dataset")]
    EmptyDataset,
    #[error("every position is masked; nothing to supervise")]
    NoSupervision,
    #[error("cannot align tokenizations: {0}")]
    Alignment(String),
    #[error("log fit needs at least 2 distinct x values")]
    DegenerateFit,
    #[error("token {0:?} is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: u32, size: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed data: {0}")]
    Format(String),
    #[error("external model: {0}")]
    External(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::BadOrder(_))
    }
}
