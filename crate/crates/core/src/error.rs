use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied input that violates an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("no observed GPA")]
    NoObservedGpa,

    #[error("single-class labels: {0}")]
    SingleClass(&'static str),

    #[error("non-finite value in row {row}, column {column}")]
    NonFinite { row: usize, column: String },

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("schema mismatch: model expects {expected}, got {got}")]
    SchemaMismatch { expected: String, got: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("label leakage: {0}")]
    Leakage(String),

    #[error("unsupported artifact version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the failure comes from bad caller data rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
