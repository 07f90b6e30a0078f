//! Run files: a scenario plus an optional sweep, read from TOML or from a
//! previous run's JSON manifest, with dotted-path `--set` overrides.

use std::path::Path;

use fdxsim_core::simulation::{ScenarioConfig, SeriesSpec, SweepAxis};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<SeriesSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl RunFile {
    /// The configured sweep, or the single scenario point.
    pub fn sweep_or_default(&self) -> SweepSpec {
        self.sweep.clone().unwrap_or_else(|| SweepSpec {
            axis: SweepAxis::PmaxUserDbm(vec![self.scenario.pmax_user_dbm]),
            series: Vec::new(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run files always serialize")
    }
}

/// The stock scenario swept over the user power grid.
pub fn default_run_file() -> RunFile {
    RunFile {
        scenario: ScenarioConfig::default(),
        sweep: Some(SweepSpec {
            axis: SweepAxis::PmaxUserDbm(crate::presets::PMAX_GRID.to_vec()),
            series: Vec::new(),
        }),
    }
}

fn config_error(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{context}: {e}"))
}

/// Reads a run file. `.json` paths are manifests written by a previous run;
/// anything else is TOML.
pub fn load(path: &Path, overrides: &[String]) -> Result<RunFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_error(&path.display().to_string(), e))?;
    let label = path.display().to_string();
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: crate::output::RunManifest =
            serde_json::from_str(&text).map_err(|e| config_error(&label, e))?;
        if overrides.is_empty() {
            return Ok(manifest.run);
        }
        let table = toml::Table::try_from(&manifest.run).map_err(|e| config_error(&label, e))?;
        return apply_overrides(table, overrides);
    }
    parse_toml(&text, overrides).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{label}: {msg}")),
        other => other,
    })
}

/// Parses TOML text; parse errors carry line and column.
pub fn parse_toml(text: &str, overrides: &[String]) -> Result<RunFile, CliError> {
    if overrides.is_empty() {
        return toml::from_str(text).map_err(|e| CliError::Config(e.to_string()));
    }
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    apply_overrides(table, overrides)
}

fn apply_overrides(mut table: toml::Table, overrides: &[String]) -> Result<RunFile, CliError> {
    for item in overrides {
        let (path, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects PATH=VALUE, got {item:?}")))?;
        let mut keys: Vec<&str> = path.trim().split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(CliError::Usage(format!("bad --set path {path:?}")));
        }
        if !matches!(keys[0], "scenario" | "sweep") {
            keys.insert(0, "scenario");
        }
        set_path(&mut table, &keys, parse_value(raw.trim()))
            .map_err(|msg| CliError::Usage(format!("--set {path}: {msg}")))?;
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("after --set overrides: {e}")))
}

/// A TOML literal if the text parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, keys: &[&str], value: toml::Value) -> Result<(), String> {
    let (last, parents) = keys.split_last().expect("path has at least one key");
    let mut cur = table;
    for key in parents {
        let entry = cur
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| format!("{key} is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Seed precedence: run file, then `FDXSIM_SEED`, then `--seed`.
pub fn resolve_seed(config_seed: u64, env: Option<&str>, flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match env {
        Some(raw) => raw
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("FDXSIM_SEED must be an unsigned 64-bit integer, got {raw:?}"))),
        None => Ok(config_seed),
    }
}
