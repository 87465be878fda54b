use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frequency {0} is outside [0, 1]")]
    FrequencyDomain(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("population size {0} must be a positive integer for exact transitions and simulation")]
    NonIntegerPopsize(f64),

    #[error("population size {popsize} exceeds the exact-transition limit of {limit}")]
    PopsizeTooLarge { popsize: usize, limit: usize },

    #[error("distribution is fully absorbed (p0 = {p0}, p1 = {p1})")]
    FullyAbsorbed { p0: f64, p1: f64 },

    #[error("grid mismatch: approximation has {approx} cells, exact distribution has {exact}")]
    GridMismatch { approx: usize, exact: usize },

    #[error("invalid time series '{label}': {reason}")]
    InvalidSeries { label: String, reason: String },

    #[error(
        "gap {gap} between t={time} and its predecessor is not an integer multiple of the \
         generation time {generation_time}; re-bin the data or choose another generation time"
    )]
    GapAlignment {
        gap: f64,
        time: f64,
        generation_time: f64,
    },

    #[error("series '{label}' has {len} points, at least {required} are required")]
    TooShort {
        label: String,
        len: usize,
        required: usize,
    },

    #[error("split time {time} is not admissible: {reason}")]
    InvalidSplit { time: f64, reason: String },

    #[error("no bin reached the minimum of {min_tokens} tokens for '{label}'")]
    EmptyBinning { label: String, min_tokens: u64 },

    #[error("point at t={0} has no token count")]
    MissingTokens(f64),

    #[error("contingency table has an empty row or column")]
    ZeroMarginal,

    #[error("reference proportion is zero in column {0} while the observed count is not")]
    ZeroExpected(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
}
