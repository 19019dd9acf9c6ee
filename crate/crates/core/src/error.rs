use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the plasmode engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("non-numeric or non-finite cell at row {row}, column '{column}': {value:?}")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("schema mismatch: missing columns {missing:?}, unexpected columns {extra:?}")]
    SchemaMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    #[error("unknown covariate '{0}'")]
    UnknownCovariate(String),

    #[error("invalid design term '{0}'")]
    BadTerm(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("design matrix is rank deficient (column {column} is collinear with earlier columns)")]
    RankDeficient { column: usize },

    #[error("all weights are zero")]
    ZeroWeights,

    #[error("invalid weights: {0}")]
    BadWeights(String),

    #[error("outcome value {value} at row {row} outside [0, 1]")]
    OutcomeRange { row: usize, value: f64 },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("degenerate propensity fit: g(W) = 0 at treated row {row}")]
    DegeneratePropensity { row: usize },

    #[error("MSM truth: {failed} of {reps} replications failed to converge")]
    MsmTruthConvergence { failed: usize, reps: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
