use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapsError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid basis configuration: {0}")]
    InvalidBasis(String),
    #[error("singular patch reproduction system at node {node}")]
    SingularPatch { node: usize },
    #[error("quadrature order {0} out of range 1..=32")]
    QuadratureOrder(usize),
    #[error("coordinate {value} outside domain [{lo}, {hi}] of dimension `{dim}`")]
    OutOfDomain { dim: String, value: f64, lo: f64, hi: f64 },
    #[error("weight evaluation failed: {0}")]
    Weight(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cannot constrain all {0} nodes of a dimension")]
    AllConstrained(usize),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("manufactured solution rejected: {0}")]
    Manufacture(String),
    #[error("linear solve failed in dimension `{dim}` (sweep {sweep}): {reason}")]
    LinearSolve { dim: String, sweep: usize, reason: String },
    #[error("singular matrix: zero pivot at row {0}")]
    SingularMatrix(usize),
    #[error("iterative solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("rate fit needs at least two usable points, got {0}")]
    RateFit(usize),
    #[error("instance too large for the full-order oracle: {0} grid points (limit {1})")]
    OracleTooLarge(usize, usize),
    #[error("{0}")]
    Other(String),
}

pub type Result<T, E = TapsError> = std::result::Result<T, E>;
