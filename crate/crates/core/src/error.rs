use thiserror::Error;

/// Errors raised by the quantile-frequency analysis routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum QfaError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input dimensions are too small, too large, or inconsistent.
    #[error("size error: {0}")]
    Size(String),

    /// The interior-point iteration did not reach the requested duality gap.
    #[error("solver did not converge after {iterations} iterations (duality gap {gap:.3e})")]
    NotConverged {
        iterations: usize,
        gap: f64,
        last_iterate: Vec<f64>,
    },

    /// A linear system was singular or not positive definite.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A spectral matrix slice could not be inverted.
    #[error("singular spectral matrix at frequency index {freq}, level index {level}")]
    SingularSlice { freq: usize, level: usize },

    /// A cell of a transform failed; wraps the underlying error.
    #[error("series {series}, frequency index {freq}, level index {level}: {source}")]
    Cell {
        series: usize,
        freq: usize,
        level: usize,
        #[source]
        source: Box<QfaError>,
    },
}

impl QfaError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        QfaError::Domain(msg.into())
    }

    pub(crate) fn size(msg: impl Into<String>) -> Self {
        QfaError::Size(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        QfaError::Numeric(msg.into())
    }

    /// True for errors produced by the numerical solvers (as opposed to
    /// input validation).
    pub fn is_numeric(&self) -> bool {
        match self {
            QfaError::NotConverged { .. }
            | QfaError::Numeric(_)
            | QfaError::SingularSlice { .. } => true,
            QfaError::Cell { source, .. } => source.is_numeric(),
            QfaError::Domain(_) | QfaError::Size(_) => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, QfaError>;
