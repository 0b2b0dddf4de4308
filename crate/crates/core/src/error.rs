use thiserror::Error;

/// Errors surfaced by market construction, the closed-form solvers and the
/// numerical verification layer.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum CarError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("volatility matrix is numerically singular")]
    SingularMatrix,

    #[error("diagonal block {0} of the volatility matrix is numerically singular")]
    SingularBlock(&'static str),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("benchmark portfolio has no excess return (b'eta must be positive)")]
    DegenerateBenchmark,

    #[error("benchmark direction is degenerate: eta is parallel to the Merton direction")]
    DegenerateDirection,

    #[error("correlation threshold must lie in [0, 1), got {0}")]
    InvalidThreshold(f64),

    #[error("correlation is undefined for a portfolio with zero volatility")]
    ZeroVolatilityPortfolio,

    #[error("block partition not supported here: {0}")]
    UnsupportedPartition(String),

    #[error("numerical optimizer failed to converge (best CaR spread {0:.3e})")]
    NoConvergence(f64),
}

pub type Result<T> = std::result::Result<T, CarError>;
