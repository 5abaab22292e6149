use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A query touched a symbol (or output column) carrying zero probability.
    #[error("zero probability: {0}")]
    ZeroProbability(String),

    /// The requested operating point lies outside the interval `[lo, hi]`.
    #[error("infeasible: {what} = {value} outside feasible interval [{lo}, {hi}]")]
    Infeasible {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("infeasible target: {0}")]
    InfeasibleTarget(String),

    /// Instance sits at an endpoint of the rate-distortion curve where the
    /// slope parameter is undefined or diverges.
    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error("did not converge after {iterations} iterations (last gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error(
        "decoder row for message {message} matches no reconstruction row (distance {distance:e})"
    )]
    UnmatchedRow { message: usize, distance: f64 },

    #[error("decoder of message {message} uses reconstruction {column}, which was pruned")]
    PrunedColumn { message: usize, column: usize },
}
