use thiserror::Error;

/// Errors raised by the channel, distribution and solver routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("trial count must be at least 1 (got {0})")]
    InvalidTrials(u64),

    #[error("trial count {n} exceeds the supported working range (n <= {max})")]
    TooManyTrials { n: u64, max: u64 },

    #[error("output index {y} outside 0..={n}")]
    OutputOutOfRange { y: u64, n: u64 },

    #[error("input {0} outside [0, 1]")]
    InputOutOfRange(f64),

    #[error("argument {0} must lie strictly inside (0, 1)")]
    NotInterior(f64),

    #[error("argument {0} is excluded from the domain")]
    ExcludedPoint(f64),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("posterior undefined at y = {y}: output has zero probability")]
    UndefinedPosterior { y: u64 },

    #[error("{0} is not an atom of the input distribution")]
    NotAnAtom(f64),

    #[error("crest factor routes disagree: identity {identity} vs direct {direct}")]
    CrestFactorMismatch { identity: f64, direct: f64 },

    #[error("cardinality estimate {estimate} exceeds the bound {bound}")]
    CardinalityBound { estimate: usize, bound: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("iteration cap of {0} reached before convergence")]
    IterationCap(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
