use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed delimited input: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed JSON document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cell at row {row}, column '{col}' is not a finite number")]
    NonNumericCell { row: usize, col: String },
    #[error("duplicate column name '{0}'")]
    DuplicateColumn(String),
    #[error("target column '{0}' not found")]
    MissingTarget(String),
    #[error("table has no rows or no feature columns")]
    EmptyTable,
    #[error("row {row} has {found} values, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("value {0} is not finite")]
    NonFinite(f64),
    #[error("column index {index} out of range for {p} columns")]
    BadIndex { index: usize, p: usize },
    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    #[error("column {0} appears in more than one group")]
    OverlappingGroups(usize),
    #[error("partition does not cover columns {0:?}")]
    NotCovering(Vec<usize>),
    #[error("group '{0}' is empty")]
    EmptyGroup(String),
    #[error("duplicate group name '{0}'")]
    DuplicateGroup(String),

    #[error("column '{0}' has zero variance")]
    ZeroVarianceColumn(String),

    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("k = {k} must be between 1 and {n}")]
    BadK { k: usize, n: usize },
    #[error("table columns do not match the model schema: {0}")]
    SchemaMismatch(String),
    #[error("model subprocess failed: {0}")]
    SubprocessFailure(String),
    #[error("model returned a non-finite prediction at row {0}")]
    NonFinitePrediction(usize),
    #[error("model is not deterministic: two evaluations of the same table differ at row {0}")]
    NonDeterministic(usize),

    #[error("surrogate design is singular ({0}); increase the number of samples")]
    SingularDesign(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
