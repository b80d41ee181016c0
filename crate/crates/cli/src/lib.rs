//! Command-line driver: resolves a [`RunConfig`], runs one command inside a
//! worker pool of the requested size and records every artifact in a manifest.
//!
//! Exit codes: 0 success, 1 numerical or validation failure, 2 configuration error.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::Path;

use clap::Parser;
use serde_json::json;

pub use config::{Command, Flags, RunConfig, ValidateTarget};
pub use manifest::MANIFEST_FILE;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

pub const ERROR_FILE: &str = "error.json";

#[derive(Debug, Parser)]
#[command(name = "genbrown", version, about = "Walk-based solvers for constant-coefficient systems on the torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] genbrown::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl RunError {
    pub fn config(msg: impl Into<String>) -> Self {
        RunError::Config(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Numerical(_) => "numerical",
            RunError::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }

    /// Machine-readable record printed on stderr and, when possible, saved as `error.json`.
    pub fn record(&self, command: &str) -> serde_json::Value {
        json!({
            "status": "error",
            "command": command,
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let name = cli.command.name();
    let cfg = match RunConfig::resolve(cli.command, cli.flags) {
        Ok(cfg) => cfg,
        Err(e) => return report_error(&e, &name, None),
    };
    match execute(&cfg) {
        Ok(passed) if passed => EXIT_OK,
        Ok(_) => EXIT_FAILURE,
        Err(e) => report_error(&e, &name, Some(&cfg.out)),
    }
}

/// Runs a resolved configuration; `Ok(false)` means a validator did not pass.
pub fn execute(cfg: &RunConfig) -> Result<bool, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| RunError::config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| commands::dispatch(cfg))
}

fn report_error(e: &RunError, command: &str, out: Option<&Path>) -> i32 {
    let record = e.record(command);
    eprintln!("{record}");
    if let Some(dir) = out {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join(ERROR_FILE), format!("{record:#}\n"));
        }
    }
    e.exit_code()
}
