use thiserror::Error;

/// Errors raised by estimation, simulation and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("NaN encountered in {0}")]
    NotANumber(&'static str),

    #[error("weight at index {index} is not a positive finite number ({value})")]
    InvalidWeight { index: usize, value: f64 },

    #[error("probability level {0} outside (0, 1]")]
    InvalidProbability(f64),

    #[error("length mismatch: {what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{arm} arm has {size} units, at least {required} required")]
    ArmTooSmall {
        arm: &'static str,
        size: usize,
        required: usize,
    },

    #[error("least-squares fit needs at least {required} observations, got {got}")]
    TooFewObservations { required: usize, got: usize },

    #[error("design matrix is rank deficient (singular value ratio {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("indicator at unit {index} selects an unobserved potential outcome")]
    UnobservedOutcome { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
