use thiserror::Error;

/// Errors reported by the Loewner toolkit.
///
/// The variants are grouped by how a caller is expected to react: malformed
/// input is a caller bug, domain and geometry errors describe configurations
/// the mathematics does not cover, and accuracy errors mean a numerical
/// procedure could not reach its tolerance.
#[derive(Debug, Error)]
pub enum LoewnerError {
    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("trace is not simple: {0}")]
    NonSimpleTrace(String),

    #[error("resolution too coarse: {message} (suggested refinement factor {suggested_refinement})")]
    Resolution {
        message: String,
        suggested_refinement: f64,
    },

    #[error("numerical accuracy: {0}")]
    NumericalAccuracy(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LoewnerError {
    pub(crate) fn malformed(msg: impl Into<String>) -> Self {
        LoewnerError::MalformedInput(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        LoewnerError::Domain(msg.into())
    }

    pub(crate) fn geometry(msg: impl Into<String>) -> Self {
        LoewnerError::Geometry(msg.into())
    }

    pub(crate) fn accuracy(msg: impl Into<String>) -> Self {
        LoewnerError::NumericalAccuracy(msg.into())
    }

    /// Coarse classification used by the command-line front end.
    pub fn kind(&self) -> ErrorKind {
        match self {
            LoewnerError::MalformedInput(_)
            | LoewnerError::Io(_)
            | LoewnerError::Csv(_)
            | LoewnerError::Json(_) => ErrorKind::Input,
            LoewnerError::Domain(_)
            | LoewnerError::Geometry(_)
            | LoewnerError::NonSimpleTrace(_) => ErrorKind::Domain,
            LoewnerError::Resolution { .. } | LoewnerError::NumericalAccuracy(_) => {
                ErrorKind::Accuracy
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Domain,
    Accuracy,
}

pub type Result<T> = std::result::Result<T, LoewnerError>;
