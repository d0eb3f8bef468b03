use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid exponent p = {0} (need p >= 1 or p = inf)")]
    InvalidExponent(f64),

    #[error("{what} index {index} out of range (valid: {valid})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        valid: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("amplitude overflow: max Re W = {max_re_w:.3} exceeds cap {cap}")]
    AmplitudeOverflow { max_re_w: f64, cap: f64 },

    #[error("dt = {dt:e} violates the explicit stability bound dt <= {bound:e}")]
    StabilityViolation { dt: f64, bound: f64 },

    #[error("non-finite values at step {step}")]
    NonFinite { step: usize },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("inadmissible Strichartz pair: {0}")]
    InadmissiblePair(String),

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("dense per-step states are not available in this record")]
    DenseDataUnavailable,

    #[error("record was produced with active noise")]
    NoisyRecord,

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("configuration error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
