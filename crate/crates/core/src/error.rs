use thiserror::Error;

/// Errors raised by the cocycle toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input at `{path}`: {message}")]
    InvalidInput { path: String, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("kernel is not uniformly ergodic (second eigenvalue modulus {lambda2_mod:.12})")]
    NonErgodicKernel { lambda2_mod: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("projective action underflow: |Mv| = {0:e}")]
    NumericUnderflow(f64),

    #[error("numerical overflow: {0}")]
    Overflow(String),

    #[error("unsupported fiber dimension {0}")]
    UnsupportedDimension(usize),

    #[error("contraction inequality not reached within n_max = {n_max} (best sup {best:.6})")]
    GapNotReached { n_max: usize, best: f64 },

    #[error("top Lyapunov exponent is not simple (gap {gap:e}, std err {std_err:e})")]
    NotSimple { gap: f64, std_err: f64 },

    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),

    #[error("geometric fit failed: {0}")]
    FitFailure(String),

    #[error("path enumeration of {paths} paths exceeds the limit and Monte Carlo is disabled")]
    PathExplosion { paths: f64 },

    #[error("symbol space has {0} points; exact transport is limited to 512")]
    TransportTooLarge(usize),
}

impl Error {
    pub(crate) fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidInput {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
