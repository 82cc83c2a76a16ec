use thiserror::Error;

/// Errors shared across the whole engine.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown symbol \"{name}\" at byte {offset}")]
    UnknownSymbol { name: String, offset: usize },

    #[error("unknown coordinate \"{name}\"")]
    UnknownCoordinate { name: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid chart: {0}")]
    InvalidChart(String),

    #[error("operands live on different charts")]
    ChartMismatch,

    #[error("valence mismatch: expected {expected}, found {found}")]
    Valence {
        expected: &'static str,
        found: &'static str,
    },

    #[error("metric is singular at {point:?}")]
    SingularMetric { point: Vec<f64> },

    #[error("{what} is rank-deficient at {point:?} (min singular value {sigma:.3e})")]
    RankDeficient {
        what: String,
        point: Vec<f64>,
        sigma: f64,
    },

    #[error("pi_{sign} is not injective at {point:?} (min singular value {sigma:.3e})")]
    PiNotInjective {
        sign: char,
        point: Vec<f64>,
        sigma: f64,
    },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("frame is not projectable: {0}")]
    NotProjectable(String),

    #[error("coordinates are not adapted to the foliation: {0}")]
    NotAdapted(String),

    #[error("flattening B-transform does not zero the frame one-forms (max |alpha'| = {max_abs:.3e})")]
    NotFlattened { max_abs: f64 },

    #[error("basic-ness violation: {what} has max leaf-derivative norm {norm:.3e}")]
    BasicnessViolation { what: String, norm: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
