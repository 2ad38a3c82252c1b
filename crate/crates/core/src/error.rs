use thiserror::Error;

use crate::solver::SolveResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operation `{op}` is not supported for model kind {kind}")]
    UnsupportedForKind { op: &'static str, kind: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite value produced while evaluating {0}")]
    NumericOverflow(&'static str),

    #[error("direction vector has zero norm")]
    DegenerateDirection,

    #[error("non-positive utility for agent {agent}: loss {loss} against cap {cap}")]
    NonPositiveUtility { agent: usize, loss: f64, cap: f64 },

    #[error("cap calibration needs at least one probe predictor")]
    EmptyProbeSet,

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("agent {agent} received no samples")]
    AgentWithNoData { agent: usize },

    #[error("dataset is not labeled: {0}")]
    NotLabeled(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("target column has {distinct} distinct values, a binary target needs exactly 2")]
    NonBinaryTarget { distinct: usize },

    #[error("invalid client count K={k} for {n_agents} agents")]
    InvalidK { k: usize, n_agents: usize },

    #[error("aggregation received no client updates")]
    EmptyRound,

    #[error("unknown agent id {0}")]
    UnknownAgent(usize),

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "solver did not converge after {} iterations (gradient norm {:e})",
        .0.iterations,
        .0.grad_norm
    )]
    NotConverged(Box<SolveResult>),

    #[error("exhaustive coalition search supports at most {max} agents, got {got}")]
    TooManyAgents { max: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Strips any `Round` wrappers and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Round { source, .. } => source.root(),
            other => other,
        }
    }
}
