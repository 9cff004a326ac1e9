use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Variants are grouped so a caller can map them to
/// coarse failure classes: configuration, backend transport, or data.
#[derive(Debug, Error)]
pub enum Error {
    // -- data loading -------------------------------------------------------
    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: String,
        line: usize,
        message: String,
    },
    #[error("dataset `{0}` contains no examples")]
    EmptyDataset(String),
    #[error("duplicate example id `{0}`")]
    DuplicateId(String),
    #[error("not enough label-{label} examples: need {needed}, have {available}")]
    InsufficientClass {
        label: u8,
        needed: usize,
        available: usize,
    },
    #[error("{0}")]
    Data(String),

    // -- impurity -----------------------------------------------------------
    #[error("impurity of an empty set is undefined")]
    EmptySet,
    #[error("label counts mismatch: parent has {parent}, children sum to {children}")]
    CountMismatch { parent: u64, children: u64 },

    // -- backend ------------------------------------------------------------
    #[error("backend transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend returned an empty completion for role `{0}`")]
    EmptyCompletion(String),
    #[error("cannot parse a yes/no answer from {raw:?}")]
    Unparseable { raw: String },
    #[error("environment variable `{0}` is not set")]
    MissingApiKey(String),
    #[error("scripted backend: {0}")]
    Script(String),

    // -- optimizer ----------------------------------------------------------
    #[error("no valid candidate prompt was produced")]
    NoValidCandidate,

    // -- tree documents -----------------------------------------------------
    #[error("unsupported tree format version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed tree document: {0}")]
    Schema(String),

    // -- baseline -----------------------------------------------------------
    #[error("feature index {index} out of range for vector of length {len}")]
    Dimension { index: usize, len: usize },

    // -- configuration ------------------------------------------------------
    #[error("invalid configuration: {0}")]
    Config(String),

    // -- passthrough --------------------------------------------------------
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Failure class used by callers that need a coarse disposition,
    /// for example to pick a process exit code.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::MissingApiKey(_) => ErrorClass::Config,
            Error::Transport { .. }
            | Error::EmptyCompletion(_)
            | Error::Unparseable { .. }
            | Error::Script(_)
            | Error::NoValidCandidate => ErrorClass::Backend,
            _ => ErrorClass::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Backend,
    Data,
}
