use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A data row could not be parsed. `row` is 1-based and counts data rows only.
    #[error("{}: row {row}: {msg}", path.display())]
    Row { path: PathBuf, row: usize, msg: String },

    #[error("{}: {msg}", path.display())]
    File { path: PathBuf, msg: String },

    #[error("label index {index} out of range for {count} labels")]
    LabelOutOfRange { index: usize, count: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid label vocabulary: {0}")]
    Vocabulary(String),

    #[error("sample {id}: {msg}")]
    Sample { id: String, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch} (non-finite loss); lower the learning rate")]
    Divergence { epoch: usize },

    #[error("featurizer fingerprint mismatch: checkpoint has {checkpoint}, configuration has {config}")]
    FingerprintMismatch { checkpoint: String, config: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn row(path: &std::path::Path, row: usize, msg: impl Into<String>) -> Self {
        Error::Row {
            path: path.to_path_buf(),
            row,
            msg: msg.into(),
        }
    }

    /// True for failures caused by numerical blow-up rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Divergence { .. })
    }
}
