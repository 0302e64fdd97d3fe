//! Reproducible experiments over the `hsplab` solvers: JSON configs in,
//! JSON reports out, scored against planted or brute-force answers.

pub mod config;
pub mod dump;
pub mod run;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Cap(String),
    #[error("{0}")]
    Io(String),
}

/// Process outcome; the discriminant is the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    SolverFailure = 1,
    ConfigError = 2,
    Mismatch = 3,
}

impl Status {
    pub fn code(self) -> u8 {
        self as u8
    }
}

impl CliError {
    /// Caps and I/O problems are reported like config errors: the request
    /// has to change before a rerun can succeed.
    pub fn status(&self) -> Status {
        Status::ConfigError
    }
}
