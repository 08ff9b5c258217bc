use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("no valid labelled slots in sequence")]
    EmptyTargets,

    #[error("no prediction-time records to summarize")]
    NoRecords,

    #[error("sequence too short: {len} slots, need at least {needed}")]
    SequenceTooShort { len: usize, needed: usize },

    #[error("non-finite value encountered at step {step}: {what}")]
    NonFinite { step: u64, what: String },

    #[error("adaptation and evaluation slots overlap: adaptation uses {adapt} slots, evaluation starts at {eval_start}")]
    Overlap { adapt: usize, eval_start: usize },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unsupported file version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },

    #[error("file truncated: expected {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("checksum mismatch: header says {expected}, payload hashes to {actual}")]
    Checksum { expected: String, actual: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by numerical failure (divergence, NaN).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }

    /// True for errors that come from reading or writing artifacts.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Format(_)
                | Error::Version { .. }
                | Error::Truncated { .. }
                | Error::Checksum { .. }
                | Error::Json(_)
        )
    }
}
