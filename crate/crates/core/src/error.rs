use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value outside the domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Fatal CSV structure problem (missing header or required column).
    #[error("malformed input: {0}")]
    Header(String),

    /// A single malformed data row; `line` is 1-based and counts the header.
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("unknown {kind} `{id}`")]
    Lookup { kind: &'static str, id: String },

    #[error("variable `{0}` is constant and cannot be binned")]
    DegenerateVariable(String),

    #[error("design matrix is singular (collinear columns)")]
    Collinearity,

    #[error("AUC is undefined when only one outcome class is present")]
    UndefinedAuc,

    #[error("consensus edge {0} -- {1} is undirected and has no manual orientation")]
    UnresolvedEdge(String, String),

    #[error("structure contains a cycle: {0}")]
    Cycle(String),

    #[error("joint state space of {0} cells exceeds the exact-inference limit")]
    StateSpaceTooLarge(u128),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A hard data constraint was violated (e.g. too many unobserved cells).
    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
