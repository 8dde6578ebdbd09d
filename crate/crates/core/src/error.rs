use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("generation failure: {0}")]
    GenerationFailure(String),
    #[error("training data failure: {0}")]
    TrainingData(String),
    #[error("linear program is {0}")]
    Lp(LpFailure),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("restricted LP too large ({vars} variables, {rows} rows); raise the threshold")]
    LpTooLarge { vars: usize, rows: usize },
    #[error("infeasible restriction: {0}")]
    InfeasibleRestriction(String),
    #[error("no path between the requested endpoints")]
    NoPath,
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Non-optimal outcome of an LP solve that a caller required to be optimal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpFailure {
    Infeasible,
    Unbounded,
}

impl std::fmt::Display for LpFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LpFailure::Infeasible => f.write_str("infeasible"),
            LpFailure::Unbounded => f.write_str("unbounded"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
