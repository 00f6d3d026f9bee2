//! Experiment driver behind the `nfb` binary: config parsing, seeded
//! scenarios and CSV/JSON artifacts.

mod config;
mod experiments;

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

pub use config::{parse_config, parse_config_with, ExperimentConfig, Kind};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error{}: {message}", key.as_ref().map(|k| format!(" at `{k}`")).unwrap_or_default())]
    Config { key: Option<String>, message: String },
    #[error(transparent)]
    Module(#[from] nfbeam::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn config(key: Option<&str>, message: String) -> Self {
        CliError::Config { key: key.map(str::to_string), message }
    }

    /// Machine-readable error record.
    pub fn to_json(&self) -> Value {
        let (kind, key) = match self {
            CliError::Config { key, .. } => ("config", key.clone()),
            CliError::Module(_) => ("module", None),
            CliError::Io { .. } => ("io", None),
        };
        json!({ "error": { "type": kind, "key": key, "message": self.to_string() } })
    }
}

/// Result of one experiment: the CSV body, headline metrics and the verdict
/// against the experiment's thresholds.
pub struct Report {
    pub csv: Vec<u8>,
    pub metrics: Map<String, Value>,
    pub thresholds: Map<String, Value>,
    pub pass: bool,
}

/// Runs the experiment without touching the filesystem.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    experiments::run(cfg)
}

/// Runs the experiment and writes `<kind>.csv`, `config.json` and
/// `summary.json` into `out`. Returns the summary.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Value, CliError> {
    let report = evaluate(cfg)?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(out).map_err(io(out))?;
    let csv_path = out.join(format!("{}.csv", cfg.kind.name()));
    fs::write(&csv_path, &report.csv).map_err(io(&csv_path))?;
    let echo = serde_json::to_value(cfg).expect("config serializes");
    let cfg_path = out.join("config.json");
    fs::write(&cfg_path, pretty(&echo)).map_err(io(&cfg_path))?;
    let summary = json!({
        "kind": cfg.kind.name(),
        "version": VERSION,
        "inputs": echo,
        "metrics": report.metrics,
        "thresholds": report.thresholds,
        "pass": report.pass,
    });
    let sum_path = out.join("summary.json");
    fs::write(&sum_path, pretty(&summary)).map_err(io(&sum_path))?;
    Ok(summary)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}
