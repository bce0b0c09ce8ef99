use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Variants carry enough context to report the
/// failure without access to the call site.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// No document in the corpus contains a single token.
    #[error("corpus contains no tokens")]
    AllDocumentsEmpty,

    #[error("column `{0}` not found in input")]
    MissingColumn(String),

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    /// A gradient evaluated to NaN or infinity; the optimizer state is left
    /// untouched when this is raised.
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    /// Evaluation was requested on a corpus with no scorable words.
    #[error("evaluation corpus has no scorable words")]
    EmptyEvaluation,

    #[error("document {0} has no gold category label")]
    MissingGoldLabels(usize),

    #[error("unsupported checkpoint schema `{found}` (expected `{expected}`)")]
    SchemaVersionMismatch { expected: String, found: String },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    /// A side-data value that the schema has never seen.
    #[error("unknown value `{value}` for side column `{column}`")]
    UnknownSideValue { column: String, value: String },

    #[error("{0}")]
    InvalidArgument(String),

    /// Training was stopped by a non-finite gradient. The model state from
    /// the last completed iteration is preserved so callers can still save it.
    #[error("training aborted at iteration {iteration}: {reason}")]
    TrainingAborted {
        iteration: usize,
        reason: String,
        model: Box<crate::trainer::TopicModel>,
        report: crate::trainer::TrainReport,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
