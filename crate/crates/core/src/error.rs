use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("self-loop on node {0}")]
    SelfLoop(i64),
    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(i64, i64),
    #[error("node id {id} out of range for a graph with {n} nodes")]
    NodeOutOfRange { id: i64, n: usize },
    #[error("graph is not connected")]
    Disconnected,
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("state is inconsistent with the graph: {0}")]
    InconsistentState(String),
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },
    #[error("infeasible design: best achievable decay rate is {best_decay:.6e}, requested {alpha:.6e}")]
    Infeasible { best_decay: f64, alpha: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
