use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dim {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite {what} at batch element {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("value iteration did not converge after {sweeps} sweeps (residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error(
        "initial policy success {rate:.3} is outside [{lo:.2}, {hi:.2}] at corruption {corruption}; retune `initial.corruption`"
    )]
    OutOfBand {
        rate: f64,
        lo: f64,
        hi: f64,
        corruption: f64,
    },

    #[error("no bracket for target intervention rate {target} in c over [{lo}, {hi}]; rate-vs-c trace: {trace:?}")]
    NoBracket {
        target: f64,
        lo: f64,
        hi: f64,
        trace: Vec<(f64, f64)>,
    },

    #[error("record {index}: {msg}")]
    Record { index: usize, msg: String },

    #[error("layout version mismatch: file has version {found}, this build reads version {expected}")]
    LayoutVersion { found: u32, expected: u32 },

    #[error("corrupt checkpoint {path}: {msg}")]
    Corrupt { path: String, msg: String },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("{0}")]
    Session(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
