use thiserror::Error;

/// Errors raised by the map, cycle and unfolding machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid word parameters: {0}")]
    InvalidWord(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("map is not continuous on the switching manifold: {0}")]
    Discontinuous(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular matrix ({what}): |det| = {det:.3e}")]
    Singular { what: String, det: f64 },

    #[error("map has nonlinear terms; closed-form cycles need a piecewise-linear map")]
    NotPiecewiseLinear,

    #[error("newton iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("newton matrix is rank deficient (|det| = {det:.3e}); possibly near a saddle-node (det(I - Df) = 0)")]
    RankDeficient { det: f64 },

    #[error("closed-form cross-check failed: {0}")]
    CrossCheck(String),

    #[error("no root found in search box: {0}")]
    NoRoot(String),

    #[error("shrinking-point hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("continuation failed: {0}")]
    Continuation(String),

    #[error("no saddle-node locus found: {0}")]
    NoLocus(String),

    #[error("unfolding check failed: {0}")]
    Unfolding(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
