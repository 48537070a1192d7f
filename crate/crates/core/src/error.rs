use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::bpe::ClassId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: invalid {encoding} text")]
    Encoding { path: PathBuf, line: usize, encoding: &'static str },

    #[error(
        "parallel files are not aligned: {source_path} has {source_lines} lines, {target_path} has {target_lines}"
    )]
    Alignment { source_path: PathBuf, source_lines: usize, target_path: PathBuf, target_lines: usize },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("class id {0} is not in the vocabulary")]
    UnknownId(ClassId),

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("distribution has no classes")]
    NoClasses,

    #[error("distribution has zero total count")]
    ZeroTotal,

    #[error("percentile must be in (0, 100], got {0}")]
    InvalidPercentile(f64),

    #[error("length ratio must be >= 1, got {0}")]
    InvalidRatio(f64),

    #[error("sweep schedule is empty")]
    EmptySchedule,

    #[error("no sweep points to choose from")]
    NoPoints,

    #[error("sweep point {label} was computed at P={found} but the recommendation asks for P={expected}")]
    PercentileMismatch { label: String, found: f64, expected: f64 },

    #[error("hypotheses and references differ in length ({hyps} vs {refs})")]
    LengthMismatch { hyps: usize, refs: usize },

    #[error("pearson correlation needs equally sized inputs of length >= 2 (got {xs} and {ys})")]
    PearsonInput { xs: usize, ys: usize },

    #[error("correlation is undefined: zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("cannot compute {coefficient}: only {found} classes have a defined value (need 2)")]
    InsufficientClasses { coefficient: &'static str, found: usize },

    #[error("cannot rank classes: every training count is zero")]
    AllZeroCounts,

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
