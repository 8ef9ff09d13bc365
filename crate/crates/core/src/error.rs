use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("label column `{0}` not found in header")]
    MissingColumn(String),

    #[error("non-numeric value {value:?} in column `{column}` at data row {row}")]
    NonNumeric { row: usize, column: String, value: String },

    #[error("dataset has a single class; at least two are required")]
    SingleClass,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid split: {0}")]
    Split(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("empty index list")]
    EmptyIndex,

    #[error("training diverged (non-finite loss) at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },

    #[error("score sets are not aligned: {0}")]
    Misaligned(String),

    #[error("evaluation needs both members and non-members, got {members} members and {nonmembers} non-members")]
    SingleClassScores { members: usize, nonmembers: usize },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("unsupported report version `{found}` (expected `{expected}`)")]
    Version { found: String, expected: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    ///
    /// 1 configuration, 2 runtime/training, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Split(_) | Error::OutOfRange(_) => 1,
            Error::MissingFile(_) | Error::Io(_) | Error::Version { .. } | Error::Format(_) => 3,
            Error::MissingColumn(_)
            | Error::NonNumeric { .. }
            | Error::SingleClass
            | Error::InvalidDataset(_) => 3,
            _ => 2,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Format(e.to_string())
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Format(format!("{other:?}")),
        }
    }
}
