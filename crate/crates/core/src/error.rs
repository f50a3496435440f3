use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: cannot read file: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}:{line}: duplicate key `{key}`")]
    DuplicateKey { path: PathBuf, line: u64, key: String },

    #[error("{path}:{line}: {reason}")]
    MalformedRow { path: PathBuf, line: u64, reason: String },

    #[error("dataset contains no ratings")]
    NoRatings,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("design matrix is rank deficient (rank {rank} < {columns} columns)")]
    RankDeficientDesign { rank: usize, columns: usize },

    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),

    #[error("subset `{label}` has {n} ratings, below the minimum of {min}")]
    SubsetTooSmall { label: String, n: usize, min: usize },

    #[error("tweet `{0}` has no label on the requested axis")]
    UnlabeledTweet(String),

    #[error("no LLM/human note pairs share a rater")]
    NoPairs,

    #[error("all {0} pairwise comparisons are ties")]
    AllTies(usize),

    #[error("sample is empty")]
    EmptySample,

    #[error("sample is degenerate: {0}")]
    DegenerateSample(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("serialization failed: {0}")]
    Serialize(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialize(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialize(e.to_string())
    }
}
