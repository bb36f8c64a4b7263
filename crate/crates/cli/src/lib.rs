//! Experiment plumbing behind the `ovdmine` binary: configuration files,
//! per-seed simulation runs, parameter sweeps and audits of recorded
//! pseudo-label files.

pub mod audit;
pub mod config;
pub mod simulate;
pub mod sweep;

use std::path::Path;

use thiserror::Error;

pub use audit::{cmd_audit, AuditRow, ScoreKind};
pub use config::{ExperimentConfig, Overrides, OUTPUT_ROOT_ENV};
pub use simulate::cmd_simulate;
pub use sweep::{cmd_sweep, Grid, SweepReport};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, flags or input files. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Anything that fails after inputs were accepted. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<ovdmine::Error> for CliError {
    fn from(e: ovdmine::Error) -> Self {
        use ovdmine::Error as E;
        match e {
            E::Config(_) | E::Validation(_) | E::InvalidBox { .. } => CliError::Validation(e.to_string()),
            E::Contract(_) | E::Io(_) | E::Json(_) => CliError::Runtime(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Runs `f` on a dedicated pool; `threads == 0` lets rayon choose.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
