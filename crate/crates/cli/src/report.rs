//! Report writing. `report.json` holds the schema version, the resolved
//! configuration, results and warnings; it is a pure function of config and
//! inputs. Wall-clock and thread count go to a separate `timing.json` so
//! the report payload stays byte-identical across reruns.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{CliError, RunConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub schema: u32,
    pub command: String,
    pub config: RunConfig,
    pub results: T,
    pub warnings: Vec<String>,
}

impl<T: Serialize> Report<T> {
    pub fn new(config: RunConfig, results: T, warnings: Vec<String>) -> Self {
        Report {
            schema: REPORT_SCHEMA_VERSION,
            command: config.command.clone(),
            config,
            results,
            warnings,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub wall_clock_seconds: f64,
    pub threads: usize,
}

pub fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numeric(format!("serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

pub fn write_report<T: Serialize>(out_dir: &Path, report: &Report<T>) -> Result<PathBuf, CliError> {
    ensure_out_dir(out_dir)?;
    let path = out_dir.join("report.json");
    write_json(&path, report)?;
    Ok(path)
}

pub fn write_timing(out_dir: &Path, timing: &Timing) -> Result<(), CliError> {
    write_json(&out_dir.join("timing.json"), timing)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

/// Shortest-round-trip float formatting for CSV cells; empty for missing.
pub fn csv_cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => String::new(),
    }
}
