use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum FpmError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate cell for point {point}: {reason}")]
    DegenerateCell { point: usize, reason: String },

    #[error("degenerate geometry at point {point}: support rank deficient after ring depth {depth}")]
    DegenerateGeometry { point: usize, depth: usize },

    #[error("degenerate support: {0}")]
    DegenerateSupport(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("numeric error at t = {time} ms, node {node}: {what}")]
    Numeric { time: f64, node: usize, what: String },

    #[error("linear solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    SolverDivergence { iterations: usize, residual: f64 },

    #[error("parse error in {source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = FpmError> = std::result::Result<T, E>;
