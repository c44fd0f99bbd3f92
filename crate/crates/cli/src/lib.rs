//! Batch front end: reads a TOML run configuration, runs hypothesis checks
//! and certifications, and writes a JSON report (plus CSV for sweeps).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::{Path, PathBuf};

pub use commands::{cmd_certify, cmd_sweep, cmd_verify, Output};
pub use config::{Problem, RunConfig};
pub use error::{exit, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Certify,
    Sweep,
    Verify,
}

/// Loads `config_path`, applies the overrides and runs `command`.
pub fn run(
    command: Command,
    config_path: &Path,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
) -> Result<Output, CliError> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = output_dir {
        cfg.output.dir = d;
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let problem = cfg.resolve(base)?;
    match command {
        Command::Certify => cmd_certify(&problem),
        Command::Sweep => cmd_sweep(&problem),
        Command::Verify => cmd_verify(&problem),
    }
}

/// Writes the report and CSV into the configured output directory and
/// returns the paths written.
pub fn write_output(out: &Output, cfg: &config::OutputSpec) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(&cfg.dir)?;
    let mut written = Vec::new();
    let report = cfg.dir.join(&cfg.report);
    std::fs::write(&report, out.report.to_json())?;
    written.push(report);
    if let Some(csv) = &out.csv {
        let path = cfg.dir.join(&cfg.csv);
        std::fs::write(&path, csv)?;
        written.push(path);
    }
    Ok(written)
}
