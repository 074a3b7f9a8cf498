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

    #[error("parse error at line {line}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        line: u64,
        column: Option<usize>,
        message: String,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("requested {requested} components but only {achievable} can be extracted")]
    TooManyComponents { requested: usize, achievable: usize },

    #[error("inner loop for component {component} did not converge after {iterations} iterations")]
    NonConvergence { component: usize, iterations: usize },

    #[error("resolvent undefined: alpha = {alpha} is not below the smallest eigenvalue {d_min}")]
    ResolventUndefined { alpha: f64, d_min: f64 },

    #[error("secular iteration cap of {iterations} reached, last residual |g - 1| = {residual:e}")]
    SecularIterationCap { iterations: usize, residual: f64 },

    #[error("no root of the secular equation lies left of the smallest eigenvalue (hard case)")]
    NoRootLeftOfMinimum,

    #[error("the orthogonal complement of the constraint directions is empty")]
    ComplementExhausted,

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("configuration error: {0}")]
    Config(String),
}
