use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("oracle scale limit exceeded: {0}")]
    ScaleLimit(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("rank violation: {0}")]
    RankViolation(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("convexity violated: {0}")]
    Convexity(String),
    #[error("assumption beta(N) = 0 violated: {0}")]
    TangentBeta(String),
    #[error("not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("expression: {0}")]
    Expression(String),
    #[error("chart: {0}")]
    Chart(String),
    #[error("hypothesis `{flag}` does not hold for formula {formula} on chart {chart}")]
    Hypothesis { formula: String, chart: String, flag: String },
    #[error("{} problems: {}", .0.len(), .0.join("; "))]
    Aggregate(Vec<String>),
    #[error("series divergence: {0}")]
    Divergence(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
