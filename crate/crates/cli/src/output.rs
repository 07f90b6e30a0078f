//! CSV and manifest writers.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use fdxsim_core::simulation::SweepResult;
use serde::{Deserialize, Serialize};

use crate::config::RunFile;
use crate::CliError;

pub const CSV_HEADER: [&str; 6] = ["axis", "series", "mean_sumrate_bps_hz", "stderr", "trials", "failed_trials"];

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    axis: &'a str,
    series: &'a str,
    mean_sumrate_bps_hz: f64,
    stderr: f64,
    trials: usize,
    failed_trials: usize,
}

/// One row per (axis value, series) in sweep order.
pub fn write_csv(path: &Path, result: &SweepResult) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for p in &result.points {
        w.serialize(CsvRow {
            axis: &p.axis,
            series: &p.series,
            mean_sumrate_bps_hz: p.mean,
            stderr: p.stderr,
            trials: p.trials,
            failed_trials: p.failed_trials,
        })
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    pub csv: PathBuf,
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub axis: String,
    pub series: String,
    pub failed_trials: usize,
    pub qos_relaxed_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub timestamp_unix: u64,
    /// Config file or figure preset the run came from.
    pub source: String,
    pub outputs: Outputs,
    /// Multiply the CSV rates by this to get bit/s per subcarrier.
    pub bandwidth_hz: f64,
    pub points: Vec<PointSummary>,
    /// Everything needed to reproduce the CSV, seed included.
    pub run: RunFile,
}

impl RunManifest {
    pub fn new(source: String, outputs: Outputs, run: RunFile, result: &SweepResult) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            source,
            outputs,
            bandwidth_hz: run.scenario.w_hz,
            points: result
                .points
                .iter()
                .map(|p| PointSummary {
                    axis: p.axis.clone(),
                    series: p.series.clone(),
                    failed_trials: p.failed_trials,
                    qos_relaxed_trials: p.qos_relaxed_trials,
                })
                .collect(),
            run,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}
