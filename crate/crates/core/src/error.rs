use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An instance violates the span or token invariants.
    InvalidInstance { id: String, reason: String },
    DuplicateId(String),
    MissingId(String),
    DimensionMismatch { expected: usize, found: usize },
    EmptySeedSet,
    EmptyReferences,
    EmptyCorpus,
    /// A sampling request cannot be satisfied by the corpus.
    Infeasible(String),
    InvalidConfig(String),
    /// Training produced a NaN or infinite loss.
    NonFiniteLoss { stage: &'static str, epoch: usize, step: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInstance { id, reason } => write!(f, "invalid instance `{id}`: {reason}"),
            Error::DuplicateId(id) => write!(f, "duplicate instance id `{id}`"),
            Error::MissingId(id) => write!(f, "no representation stored for instance id `{id}`"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::EmptySeedSet => f.write_str("seed set is empty"),
            Error::EmptyReferences => f.write_str("reference set is empty"),
            Error::EmptyCorpus => f.write_str("corpus is empty"),
            Error::Infeasible(msg) => write!(f, "infeasible request: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::NonFiniteLoss { stage, epoch, step } => {
                write!(f, "non-finite loss during {stage} (epoch {epoch}, step {step})")
            }
        }
    }
}

impl core::error::Error for Error {}
