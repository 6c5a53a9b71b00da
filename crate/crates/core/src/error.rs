use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("ensemble needs at least {required} members, got {actual}")]
    TooFewMembers { required: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive definite after jitter up to {jitter:e}")]
    Factorization { jitter: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("no common ratio in (0, 1] satisfies the sum-to-one rule: {0}")]
    NoGamma(String),

    #[error("schedule violates the sum-to-one rule: sum of 1/alpha_k = {sum}, expected 1")]
    SumToOne { sum: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("empty singular spectrum")]
    EmptySpectrum,

    #[error("number of assimilations exceeded the cap of {cap} before alpha_1 reached alpha* = {alpha_star}")]
    AssimilationCap { cap: usize, alpha_star: f64 },

    #[error("forward model failed for member {member}: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("assimilation step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("SVD did not converge")]
    Svd,

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("parse error in {context}: {reason}")]
    Parse { context: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
