//! Exit-code taxonomy.

use resonance_core::Error;

pub const EXIT_CHECKS: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_NO_ROOT: i32 = 5;
pub const EXIT_HYPOTHESIS: i32 = 6;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(EXIT_IO, message)
    }

    pub fn from_core(e: Error) -> Self {
        let code = match &e {
            Error::InvalidWord(_)
            | Error::InvalidParameter(_)
            | Error::Discontinuous(_)
            | Error::Dimension(_)
            | Error::Serde(_) => EXIT_CONFIG,
            Error::NoRoot(_) => EXIT_NO_ROOT,
            Error::Hypothesis(_) => EXIT_HYPOTHESIS,
            Error::Singular { .. }
            | Error::NotPiecewiseLinear
            | Error::NoConvergence { .. }
            | Error::RankDeficient { .. }
            | Error::CrossCheck(_)
            | Error::Continuation(_)
            | Error::NoLocus(_)
            | Error::Unfolding(_) => EXIT_SOLVER,
        };
        Self::new(code, e.to_string())
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}
