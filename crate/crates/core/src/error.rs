use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("exact assignment needs N <= {cap}, got N = {n}")]
    AssignmentTooLarge { n: usize, cap: usize },

    #[error("unequal atom counts ({left} vs {right}); only equal-size empirical measures are compared")]
    UnequalSizes { left: usize, right: usize },

    #[error("covariance factorization failed after {attempts} jitter attempts")]
    NotPositiveDefinite { attempts: usize },

    #[error("non-finite drift at step {step}, particle {particle}")]
    NonFiniteDrift { step: usize, particle: usize },

    #[error("blow-up at step {step}, particle {particle}: |x| = {norm:e} exceeds cap {cap:e}")]
    BlowUp {
        step: usize,
        particle: usize,
        norm: f64,
        cap: f64,
    },

    #[error("drift declaration rejected: {0}")]
    Declaration(String),

    #[error("missing constant `{constant}` for drift family {family}")]
    MissingConstant {
        family: &'static str,
        constant: &'static str,
    },

    #[error("inversion bracket failure: target {target} outside G([{lo:e}, {hi:e}])")]
    Bracket { target: f64, lo: f64, hi: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error in {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
