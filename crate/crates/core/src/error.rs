use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),

    #[error("row {row}: label value `{value}` is not 0 or 1")]
    InvalidLabel { row: usize, value: String },

    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: missing value")]
    MissingValue { row: usize, column: String },

    #[error("dataset too small: {rows} rows, need at least {min}")]
    TooSmall { rows: usize, min: usize },

    #[error("degenerate labels: need at least one positive and one negative")]
    DegenerateLabels,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("feature count mismatch: model expects {expected}, got {got}")]
    FeatureMismatch { expected: usize, got: usize },

    #[error("{what} did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("zero normalisation denominator: raw logistic recent-set Brier is 0")]
    ZeroDenominator,

    #[error("empty cell: {0}")]
    EmptyCell(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
