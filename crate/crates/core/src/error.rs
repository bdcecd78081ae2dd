use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LarError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LarError {
    #[error("{}: file not found", path.display())]
    NotFound { path: PathBuf },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("corpus contains no trajectories")]
    EmptyCorpus,

    #[error("line {line}: duplicate trajectory id {id:?}")]
    DuplicateId { id: String, line: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("candidate {0:?} has an empty successor distribution")]
    EmptySuccessors(String),

    #[error("unsupported {kind} version {found} (expected {expected})")]
    VersionMismatch {
        kind: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("corrupted vocabulary at line {line}: {reason}")]
    CorruptVocabulary { line: usize, reason: String },

    #[error("duplicate segment {0:?} in vocabulary input")]
    DuplicateSegment(String),

    #[error("fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("unknown latent symbol {symbol} at step {step}, position {position}")]
    UnknownSymbol {
        symbol: String,
        step: usize,
        position: usize,
    },

    #[error("inconsistent dual pair {id:?}: {reason}")]
    InconsistentPair { id: String, reason: String },

    #[error("shape mismatch: teacher {teacher:?} vs student {student:?}")]
    ShapeMismatch {
        teacher: (usize, usize),
        student: (usize, usize),
    },

    #[error("non-finite logit at row {row}, column {col}")]
    NonFiniteLogit { row: usize, col: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl LarError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        let path = path.into();
        if source.kind() == io::ErrorKind::NotFound {
            LarError::NotFound { path }
        } else {
            LarError::Io { path, source }
        }
    }

    /// Process exit code for this error: 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            LarError::NotFound { .. } | LarError::Io { .. } => 2,
            _ => 1,
        }
    }
}
