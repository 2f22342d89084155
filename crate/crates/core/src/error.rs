//! Crate-wide error type. Every fallible operation returns [`Result`].

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes do not conform for `op`. Both shapes are reported.
    #[error("{op}: shape mismatch, left is {}x{}, right is {}x{}", left.0, left.1, right.0, right.1)]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    /// A scalar argument is outside its documented domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An operation was called in a state that cannot serve it,
    /// e.g. backward before forward.
    #[error("invalid state: {0}")]
    State(String),

    /// A model or training configuration is internally inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Train-mode batch statistics need at least two rows.
    #[error("batch of {got} rows is too small: {context}")]
    BatchTooSmall { got: usize, context: &'static str },

    /// A class label is outside `0..n_classes`.
    #[error("label {label} out of range for {n_classes} classes{}", at.map(|r| format!(" (row {r})")).unwrap_or_default())]
    LabelOutOfRange {
        label: usize,
        n_classes: usize,
        at: Option<usize>,
    },

    /// A CSV line failed to parse. Line numbers are 1-based.
    #[error("{path}:{line}: {msg}")]
    CsvParse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// The loss became NaN or infinite during training.
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    /// A cross-validation run failed; wraps the underlying error with the
    /// run's position in the fold plan.
    #[error("cross-validation run (repeat {repeat}, fold {fold}): {source}")]
    CvRun {
        repeat: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    /// A serialized model file is malformed. Offset is the byte position
    /// at which reading failed.
    #[error("model file {path}: {msg} at byte offset {offset}")]
    ModelFormat {
        path: PathBuf,
        offset: usize,
        msg: String,
    },

    /// A probability vector fails its distribution preconditions.
    #[error("invalid distribution: {0}")]
    Distribution(String),

    /// Every trial of a hyperparameter search failed.
    #[error("all {} search trials failed; first failure: {}", failures.len(), failures.first().map(String::as_str).unwrap_or("none"))]
    SearchFailed { failures: Vec<String> },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
