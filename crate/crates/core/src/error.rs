use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("graph is not connected ({components} components)")]
    Disconnected { components: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("agent {agent} is missing the value of agent {missing} after exchange")]
    IncompleteExchange { agent: usize, missing: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("problem family mismatch: expected {expected}, instance is {actual}")]
    FamilyMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("stale subproblem cache: point computed at epoch {point}, state is at epoch {state}")]
    StaleCache { point: u64, state: u64 },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("Newton direction missed its budget: residual ratio {ratio:.3e} > eta {eta:.3e} after {iterations} APG iterations")]
    BudgetMiss {
        ratio: f64,
        eta: f64,
        iterations: usize,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
