use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("rotation dimension n={n} outside supported range 2..={max}")]
    DimensionOutOfRange { n: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("cannot project an empty vector")]
    EmptyVector,

    #[error("infeasible spectrahedron point: {0}")]
    Infeasible(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("agent id {id} out of range for graph with {n} agents")]
    BadAgent { id: usize, n: usize },

    #[error("graph is not strongly connected")]
    NotStronglyConnected,

    #[error("invalid protocol configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite aggregate at iteration {iteration} (step size too large?)")]
    Divergent { iteration: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
