use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time {t} outside stored range [{min}, {max}]")]
    OutOfRange { t: f64, min: f64, max: f64 },

    #[error("concatenation endpoint mismatch: past ends at {past:?}, future starts at {future:?}")]
    ConcatMismatch { past: Vec<f64>, future: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("time step mismatch: {a} vs {b}")]
    DtMismatch { a: f64, b: f64 },

    #[error("kernel exponent overflow at lag {lag}")]
    Divergence { lag: f64 },

    #[error("blowup at step {step} (t = {time}): monitored value {value} reached radius {radius}")]
    Blowup {
        step: usize,
        time: f64,
        value: f64,
        radius: f64,
    },

    #[error("Picard iteration stopped contracting after {iterations} iterations on a chunk of {chunk_steps} steps; use a smaller chunk")]
    ContractionFailure {
        iterations: usize,
        chunk_steps: usize,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("unreliable estimate: {excluded} of {total} continuations excluded")]
    UnreliableEstimate { excluded: usize, total: usize },

    #[error("{} chain(s) failed, seeds {failed_seeds:?}", failed_seeds.len())]
    PartialFailure { failed_seeds: Vec<u64> },

    #[error("empty measure")]
    EmptyMeasure,

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("reconstruction did not converge by lookback {lookback_steps} steps (last change {last_delta})")]
    NonConvergence { last_delta: f64, lookback_steps: usize },

    #[error("infinite Lyapunov value at index {index}")]
    InfiniteValue { index: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
