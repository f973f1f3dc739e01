use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("measure has no support points")]
    EmptySupport,
    #[error("weight {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("coordinate ({row}, {col}) is not finite")]
    NonfiniteCoordinate { row: usize, col: usize },
    #[error("weights sum to {0}, expected a positive total mass")]
    ZeroMass(f64),
    #[error("bad dimensions: {0}")]
    BadDimensions(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("cost matrix of {entries} entries exceeds the dense cache budget of {budget}")]
    CacheBudgetExceeded { entries: usize, budget: usize },
    #[error("scale must be positive, got {0}")]
    NonpositiveScale(f64),
    #[error("regularization eps must be positive, got {0}")]
    NonpositiveEps(f64),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive semi-definite (eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("matrix columns are not orthonormal (max deviation {0:e})")]
    NotOrthogonal(f64),
    #[error("operation requires a {0} cost")]
    WrongCostVariant(&'static str),
    #[error("coupling matrix entry {value} left the box [-{bound}, {bound}]; inputs are probably not centered")]
    ABoundViolated { value: f64, bound: f64 },
    #[error("no records in cell")]
    EmptyCell,
    #[error("rate fit needs at least two distinct sample sizes with positive deviation")]
    DegenerateFit,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
