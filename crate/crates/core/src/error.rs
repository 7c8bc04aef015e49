use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("matrix is not positive semidefinite ({0})")]
    NotPositiveSemidefinite(String),

    #[error("HAR coefficients sum to {sum} >= 1; the recursion is not stationary")]
    NonStationary { sum: f64 },

    #[error("failed to draw a positive definite idiosyncratic matrix within {budget} attempts")]
    RetryBudgetExhausted { budget: usize },

    #[error("sieve basis is rank deficient; collinear columns: {columns:?}")]
    RankDeficientBasis { columns: Vec<String> },

    #[error("not enough observations: need {required}, got {actual} ({context})")]
    InsufficientData {
        context: &'static str,
        required: usize,
        actual: usize,
    },

    #[error("asset {asset} has no tick at or before the first grid time {grid_start}")]
    MissingInitialTick { asset: String, grid_start: f64 },

    #[error("portfolio problem infeasible: gross exposure bound {c} < 1")]
    Infeasible { c: f64 },

    #[error(
        "solver did not converge in {iterations} iterations \
         (primal residual {primal:.3e}, dual residual {dual:.3e})"
    )]
    NoConvergence {
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("[{stage}] {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Tags the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(
        context: &'static str,
        expected: impl std::fmt::Debug,
        actual: impl std::fmt::Debug,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn format(path: impl AsRef<std::path::Path>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            reason: reason.into(),
        }
    }
}
