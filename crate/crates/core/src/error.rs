use thiserror::Error;

/// Errors produced by the domain, quadrature, kernel and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite integrand value {value} at sample {index} ({point})")]
    NonFinite {
        index: usize,
        point: String,
        value: String,
    },

    #[error("series not converged after {terms} terms (last tail bound {tail:e})")]
    SeriesTruncated { terms: usize, tail: f64 },

    #[error("kernel coefficient system is singular or inconsistent (residual {residual:e})")]
    InconsistentSystem { residual: f64 },

    #[error("coefficient of {index} is nonzero but the decomposition requires vanishing below order {order}")]
    LowOrderTerm { index: String, order: usize },

    #[error("empty grid")]
    EmptyGrid,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
