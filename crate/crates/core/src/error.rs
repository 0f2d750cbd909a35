use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A marginal hit sum of squares vanished for the given lag window.
    #[error("zero denominator in cross-quantilogram at lag {lag}")]
    ZeroDenominator { lag: usize },

    #[error("self-normalizing matrix is numerically singular (condition number {condition:e})")]
    SingularNormalizer { condition: f64 },

    #[error("self-normalizer is zero: recursive estimates do not vary")]
    DegenerateNormalizer,

    #[error("hit correlation matrix is numerically singular (condition number {condition:e})")]
    SingularHitMatrix { condition: f64 },

    #[error("no critical value for p={p}, omega={omega}, tau={tau}")]
    MissingCriticalValue { p: usize, omega: f64, tau: f64 },

    #[error("every quantile pair in the grid was degenerate")]
    AllPairsExcluded,

    #[error("bootstrap replicate {replicate} stayed degenerate after {retries} redraws")]
    ReplicateExhausted { replicate: usize, retries: usize },

    #[error("critical value table, line {line}: {message}")]
    TableFormat { line: usize, message: String },
}

impl Error {
    /// True for failures caused by degenerate numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroDenominator { .. }
                | Error::SingularNormalizer { .. }
                | Error::DegenerateNormalizer
                | Error::SingularHitMatrix { .. }
                | Error::AllPairsExcluded
                | Error::ReplicateExhausted { .. }
        )
    }
}
