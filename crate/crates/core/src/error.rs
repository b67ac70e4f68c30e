use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("line {line}: non-positive load {load}")]
    NonPositiveLoad { line: usize, load: f64 },

    #[error("line {line}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp { line: usize, timestamp: String },

    #[error("gap of {hours} hours after {after} exceeds the imputation limit of {limit} hours")]
    GapTooLong { after: String, hours: i64, limit: i64 },

    #[error("dataset too short: {0}")]
    TooShort(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("schema mismatch: expected {expected} features, got {got}")]
    SchemaMismatch { expected: usize, got: usize },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("SMO did not converge within {iterations} iterations (violation {violation:e})")]
    SmoNotConverged { iterations: usize, violation: f64 },

    #[error("model {model}: {source}")]
    Model {
        model: String,
        #[source]
        source: Box<Error>,
    },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("artifact: {0}")]
    Artifact(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
