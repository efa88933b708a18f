//! Experiment harness: configuration, training runs, ablations, bound
//! verification and gradient checks.
//!
//! Exit codes used by the `cup` binary: 0 success, 1 config error,
//! 2 runtime or numeric abort, 3 verification failure.

pub mod ablation;
pub mod config;
pub mod gradcheck;
pub mod metrics;
pub mod sources;
pub mod train;
pub mod verify;

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl HarnessError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Io { .. } | HarnessError::Runtime(_) => 2,
            HarnessError::Verification(_) => 3,
        }
    }
}

impl From<cup_core::sac::SacError> for HarnessError {
    fn from(e: cup_core::sac::SacError) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

impl From<cup_core::cup::CupError> for HarnessError {
    fn from(e: cup_core::cup::CupError) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

impl From<cup_core::replay::ReplayError> for HarnessError {
    fn from(e: cup_core::replay::ReplayError) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

impl From<cup_core::tabular::TabularError> for HarnessError {
    fn from(e: cup_core::tabular::TabularError) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}
