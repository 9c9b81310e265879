use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("avatar index {index} out of range for {n} avatars")]
    AvatarOutOfRange { index: usize, n: usize },

    #[error("avatar {0} appears more than once in a roster")]
    DuplicateAvatar(usize),

    #[error("avatar {0} appears on both teams")]
    OverlappingRosters(usize),

    #[error("roster has {size} members, expected {expected}")]
    RosterSize { size: usize, expected: &'static str },

    #[error("pair query needs two distinct avatars, got {0} twice")]
    SelfPair(usize),

    #[error("{0} has zero norm")]
    ZeroNorm(String),

    #[error("unknown avatar name(s): {}", .0.join(", "))]
    UnknownAvatar(Vec<String>),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("labels contain a single class")]
    SingleClass,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad data or bad arguments).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::ZeroNorm(_) | Error::Degenerate(_) | Error::SingleClass
        )
    }
}
