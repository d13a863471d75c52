use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("unsupported discretization scheme `{0}`; only `box` is available")]
    UnsupportedScheme(String),
    #[error("operator is not symmetric (residual {residual:.3e})")]
    NotSymmetric { residual: f64 },
    #[error("rank condition failed: {0}")]
    Rank(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Hypothesis(_) | Error::NotSymmetric { .. } | Error::Rank(_) | Error::Singular(_) => 2,
            _ => 3,
        }
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
