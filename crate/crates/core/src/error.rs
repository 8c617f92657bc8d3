use std::io;

use thiserror::Error;

/// Errors raised anywhere in the classification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index {index} out of range for size {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("duplicate entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("no input parts given")]
    EmptyInput,
    #[error("no document survived preprocessing")]
    EmptyCorpus,
    #[error("document has no tokens")]
    EmptyDocument,
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("loss is not finite: {0}")]
    NonFiniteLoss(f64),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt tensor: {0}")]
    CorruptTensor(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Stable machine-readable name of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::DuplicateEntry { .. } => "DuplicateEntry",
            Error::NonFinite(_) => "NonFinite",
            Error::EmptyInput => "EmptyInput",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::EmptyDocument => "EmptyDocument",
            Error::EmptyGraph => "EmptyGraph",
            Error::EmptyDataset => "EmptyDataset",
            Error::EmptyMatrix => "EmptyMatrix",
            Error::LabelOutOfRange { .. } => "LabelOutOfRange",
            Error::ClassOutOfRange { .. } => "ClassOutOfRange",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::NonFiniteLoss(_) => "NonFiniteLoss",
            Error::BadMagic => "BadMagic",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::CorruptTensor(_) => "CorruptTensor",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
        }
    }

    /// True for failures caused by numerical blow-up rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::NonFiniteLoss(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
