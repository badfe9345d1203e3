use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("barrier domain: iterate norm {0} is not inside the unit ball")]
    BarrierDomain(f64),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical kind (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_) | Error::Convergence { .. } | Error::BarrierDomain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
