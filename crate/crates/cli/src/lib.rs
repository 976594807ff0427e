//! Configuration, orchestration and artifact output for design runs.
//!
//! A run expands one TOML configuration into cases (V₀ variant × estimator ×
//! α, plus transformed copies for invariance checks), solves them
//! concurrently and writes per-case results, certificate plot data,
//! iteration traces and a sweep-level design table.

pub mod config;
pub mod output;
pub mod run;

pub use config::{ConfigError, RunConfig};
pub use output::DesignTable;
pub use run::{plan, run, run_file, verify_result, CaseResult, RunError, RunOptions, RunReport, VerifyReport};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "MMDESIGN_WORKERS";
