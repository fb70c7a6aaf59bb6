//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed binary file. `offset` is the byte position of the defect.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Structurally inconsistent data (label counts, metadata references).
    #[error("structural error: {0}")]
    Structure(String),

    /// Dimension or row-count mismatch between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Rows whose norm is at or below the degeneracy threshold.
    #[error("degenerate rows (norm <= {epsilon:e}) at indices {indices:?}")]
    DegenerateRows { epsilon: f64, indices: Vec<usize> },

    /// A matrix required to be well-conditioned is numerically singular.
    #[error("ill-conditioned {what}: sigma_min = {sigma_min:e}")]
    IllConditioned { what: String, sigma_min: f64 },

    /// The requested inverse does not exist.
    #[error("not invertible: {0}")]
    NotInvertible(String),

    /// An operation needing labels was given an unlabeled set.
    #[error("missing labels: {0}")]
    MissingLabels(String),

    /// Precondition on an argument violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// True for errors that mean "the file itself is malformed" as opposed
    /// to "the inputs do not satisfy an operation contract".
    pub fn is_format(&self) -> bool {
        matches!(
            self,
            Error::Format { .. } | Error::Io(_) | Error::Json(_) | Error::Csv(_)
        )
    }
}
