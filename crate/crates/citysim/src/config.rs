//! Scenario files: the core scenario config plus references to data files,
//! with `dotted.key=value` overrides from the command line.

use std::path::{Path, PathBuf};

use citysim_core::sim::{EngineInputs, ScenarioConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{in_file, Error, Result};
use crate::formats::{load_analytic_params, load_empirical_table, read_text, workload_from_csv};
use crate::store::load_service;

/// Data files referenced by a scenario. Relative paths are resolved against
/// the scenario file's directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileRefs {
    /// Replaces `network.throughput.empirical`.
    pub empirical_table: Option<PathBuf>,
    /// Replaces `network.throughput.analytic`.
    pub analytic_params: Option<PathBuf>,
    pub sensor_registry: Option<PathBuf>,
    /// Directory of `.sme` observation files; needs a registry.
    pub observations: Option<PathBuf>,
    pub breakpoints: Option<PathBuf>,
    /// Workload CSV; replaces any generated workload.
    pub workload: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FileConfig {
    #[serde(flatten)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub files: FileRefs,
}

/// A scenario ready to run.
#[derive(Debug)]
pub struct LoadedScenario {
    pub config: ScenarioConfig,
    pub inputs: EngineInputs,
    /// The effective configuration with overrides applied and file paths
    /// made absolute.
    pub resolved: FileConfig,
}

fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

/// Applies one `a.b.c=value` override. The value is read as a TOML value
/// and falls back to a plain string. Numeric segments index arrays.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| Error::Validation(format!("override '{assignment}' is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|s| s.is_empty()) {
        return Err(Error::Validation(format!("override '{assignment}' has an empty key segment")));
    }
    let bad = |why: &str| Error::Validation(format!("override '{assignment}': {why}"));
    let mut cur = root;
    for seg in &path {
        cur = match cur {
            Value::Table(t) => t.entry(seg.to_string()).or_insert_with(|| Value::Table(Table::new())),
            Value::Array(a) => {
                let i: usize = seg.parse().map_err(|_| bad("array segment must be an index"))?;
                a.get_mut(i).ok_or_else(|| bad("array index out of range"))?
            }
            _ => return Err(bad("path runs through a non-table value")),
        };
    }
    *cur = parse_value(raw.trim());
    Ok(())
}

/// Parses scenario text and applies overrides in order.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<FileConfig> {
    let table: Table = text.parse().map_err(Error::validation)?;
    let mut root = Value::Table(table);
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let config: FileConfig = root.try_into().map_err(Error::validation)?;
    Ok(config)
}

/// `p` against `base`, canonical when the file exists so snapshots do not
/// carry `..` segments. Missing files keep the joined path and fail on load.
fn absolute(base: &Path, p: &Option<PathBuf>) -> Option<PathBuf> {
    p.as_ref().map(|p| {
        let joined = base.join(p);
        std::fs::canonicalize(&joined).unwrap_or(joined)
    })
}

/// Reads a scenario file, applies overrides, loads referenced data files
/// and validates the result.
pub fn load_scenario(path: &Path, overrides: &[String]) -> Result<LoadedScenario> {
    let text = read_text(path)?;
    let mut file = parse_config(&text, overrides).map_err(|e| in_file(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = std::path::absolute(&base).map_err(|e| Error::io(&base, e))?;
    let f = &file.files;
    file.files = FileRefs {
        empirical_table: absolute(&base, &f.empirical_table),
        analytic_params: absolute(&base, &f.analytic_params),
        sensor_registry: absolute(&base, &f.sensor_registry),
        observations: absolute(&base, &f.observations),
        breakpoints: absolute(&base, &f.breakpoints),
        workload: absolute(&base, &f.workload),
    };

    let mut config = file.scenario.clone();
    let refs = &file.files;
    if let Some(p) = &refs.empirical_table {
        config.network.throughput.empirical = load_empirical_table(p)?;
    }
    if let Some(p) = &refs.analytic_params {
        config.network.throughput.analytic = load_analytic_params(p)?;
    }
    let mut inputs = EngineInputs::default();
    match &refs.sensor_registry {
        Some(reg) => {
            inputs.sensor_service = Some(load_service(reg, refs.breakpoints.as_deref(), refs.observations.as_deref())?);
        }
        None if refs.observations.is_some() || refs.breakpoints.is_some() => {
            return Err(in_file(path, "files.observations and files.breakpoints need files.sensor_registry"));
        }
        None => {}
    }
    if let Some(p) = &refs.workload {
        let w = workload_from_csv(&read_text(p)?, None).map_err(|e| in_file(p, e))?;
        inputs.workload = Some(w);
    }
    config.validate().map_err(|e| in_file(path, e))?;
    Ok(LoadedScenario { config, inputs, resolved: file })
}
