//! Command-line front end for atom detection, tracking and species
//! classification on image stacks.
//!
//! Exit status: 0 on success, 1 for usage or configuration errors, 2 for
//! input data and I/O errors, 3 for internal errors.

use std::fmt;

pub mod commands;
pub mod config;
pub mod font;
pub mod render;

pub use commands::{run, Cli};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

/// An error together with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self { code: EXIT_USAGE, error: anyhow::anyhow!("{msg}") }
    }

    pub fn data(error: anyhow::Error) -> Self {
        Self { code: EXIT_DATA, error }
    }

    /// Classifies a library error and prefixes the pipeline stage it came from.
    pub fn stage(stage: &str, e: atomtrack_core::Error) -> Self {
        let code = if e.is_param_error() {
            EXIT_USAGE
        } else if e.is_internal() {
            EXIT_INTERNAL
        } else {
            EXIT_DATA
        };
        Self { code, error: anyhow::Error::new(e).context(format!("{stage} failed")) }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &str) -> Result<T, Failure>;
}

impl<T> StageExt<T> for atomtrack_core::Result<T> {
    fn stage(self, stage: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure::stage(stage, e))
    }
}
