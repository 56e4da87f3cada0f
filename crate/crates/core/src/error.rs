use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (dimensions, bounds, counts).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Cholesky factorization failed even after jitter escalation.
    #[error("factorization failed after jitter levels {attempted:?}")]
    Factorization { attempted: Vec<f64> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simulation failure: {0}")]
    Simulation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Stable machine-readable tag used in CLI error JSON and FFI codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Contract(_) => "contract",
            Error::Factorization { .. } => "factorization",
            Error::Numerical(_) => "numerical",
            Error::Config(_) => "config",
            Error::Simulation(_) => "simulation",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
