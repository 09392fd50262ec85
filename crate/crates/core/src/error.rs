//! Crate-wide error type and result alias.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("insufficient history: requested window [{requested_start}, {origin}] but frame starts at {frame_start}; earliest usable origin is {earliest_origin}")]
    InsufficientHistory {
        requested_start: i64,
        origin: i64,
        frame_start: i64,
        earliest_origin: i64,
    },

    #[error("degenerate channel '{channel}': {reason}")]
    DegenerateChannel { channel: String, reason: String },

    #[error("schema mismatch in {path}: {diff}")]
    Schema { path: String, diff: String },

    #[error("format error in {path} at line {line}: {reason}")]
    Format {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("bundle incomplete: {0}")]
    BundleIncomplete(String),

    #[error("shape mismatch in {op}: lhs {lhs:?}, rhs {rhs:?}")]
    Shape {
        op: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("attention mask row {row} is fully masked")]
    InvalidMask { row: usize },

    #[error("train-mode forward requires a seeded dropout mask source")]
    MissingSeed,

    #[error("insufficient span: {0}")]
    InsufficientSpan(String),

    #[error("empty split '{role}': {candidates} candidate origins, all skipped ({histogram})")]
    EmptySplit {
        role: String,
        candidates: usize,
        histogram: String,
    },

    #[error("target history absent from encoder inputs: {0}")]
    MissingHistory(String),

    #[error("non-finite value encountered: {0}")]
    NumericFailure(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code for the CLI contract: 2 for data problems,
    /// 3 for training failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } | Error::NumericFailure(_) | Error::MissingSeed => 3,
            _ => 2,
        }
    }
}
