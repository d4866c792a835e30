//! Error taxonomy shared by the whole crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong in the library, grouped by origin so that
/// callers (and the CLI exit-code mapping) can react per class.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed data passed to a library call: dimension mismatches, bad
    /// labels, empty collections where content is required, non-finite input.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A rejected configuration value: non-positive kernel or loss parameters,
    /// out-of-range levels, unknown keys, missing seeds.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Numerical failure inside a factorization or linear solve.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The optimizer exhausted its iteration budget. Carries the last-iterate
    /// diagnostics so the failure can be triaged without rerunning.
    #[error(
        "solver did not converge after {iterations} iterations \
         (objective {objective:e}, gradient sup-norm {grad_sup_norm:e}, \
         fixed-point residual {fixed_point_residual:e})"
    )]
    Convergence {
        iterations: usize,
        objective: f64,
        grad_sup_norm: f64,
        fixed_point_residual: f64,
    },

    /// Too many bootstrap or Monte-Carlo replicates failed for the ensemble
    /// to be trustworthy.
    #[error("ensemble failure: {0}")]
    Ensemble(String),

    /// Filesystem or serialization failure.
    #[error("i/o failure: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code the CLI maps this error class to.
    ///
    /// `2` for configuration/input problems, `3` for numerical problems
    /// (including non-convergence and ensemble failures), `4` for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::InvalidConfig(_) => 2,
            Error::Numeric(_) | Error::Convergence { .. } | Error::Ensemble(_) => 3,
            Error::Io(_) => 4,
        }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "input",
            Error::InvalidConfig(_) => "config",
            Error::Numeric(_) => "numeric",
            Error::Convergence { .. } => "convergence",
            Error::Ensemble(_) => "ensemble",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(format!("json: {e}"))
    }
}
