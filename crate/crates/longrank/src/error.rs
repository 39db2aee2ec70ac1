//! Crate-wide error type.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Incompatible operand shapes, reported with both shapes.
    Dimension {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    /// Attention was asked to run over an empty history segment.
    EmptyHistory { segment: usize },
    /// Token budget below the feasible minimum for the batch.
    InfeasibleBudget { budget: usize, required: usize },
    /// Compaction called on a batch whose token total does not fill the budget exactly.
    CompactionPrecondition { total: usize, expected: usize },
    /// Two triplets share a grouping key but carry different histories.
    GroupingConflict { user_id: u64 },
    /// Metric is undefined for the given input (e.g. single-class AUC).
    UndefinedMetric(&'static str),
    /// Invalid configuration value.
    Config(String),
    /// Malformed checkpoint or dataset payload.
    Format(String),
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, lhs, rhs } => {
                write!(f, "{op}: dimension mismatch {}x{} vs {}x{}", lhs.0, lhs.1, rhs.0, rhs.1)
            }
            Error::EmptyHistory { segment } => {
                write!(f, "empty history in segment {segment}: attention needs at least one event")
            }
            Error::InfeasibleBudget { budget, required } => {
                write!(f, "token budget {budget} below feasible minimum {required}")
            }
            Error::CompactionPrecondition { total, expected } => {
                write!(f, "compaction needs exactly {expected} tokens, batch holds {total}")
            }
            Error::GroupingConflict { user_id } => {
                write!(f, "grouping conflict: user {user_id} appears with differing histories")
            }
            Error::UndefinedMetric(what) => write!(f, "undefined metric: {what}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
