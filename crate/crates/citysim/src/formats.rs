//! Readers and writers for the file formats the runner consumes and emits.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use citysim_core::dissemination::ContentId;
use citysim_core::group_net::{AnalyticParams, EmpiricalTable, PeerId};
use citysim_core::sensor_service::{BreakpointTable, ServiceDescription};
use citysim_core::sim::Metrics;
use citysim_core::time::SimTime;
use citysim_core::workload::{EventKind, Workload, WorkloadEvent, WorkloadParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{in_file, Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    toml::from_str(&read_text(path)?).map_err(|e| in_file(path, e))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(Error::validation)
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path.file_name().ok_or_else(|| Error::validation(format!("{}: not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let io = |e| Error::io(&tmp, e);
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_empirical_table(path: &Path) -> Result<EmpiricalTable> {
    let table: EmpiricalTable = load_toml(path)?;
    table.validate().map_err(|e| in_file(path, e))?;
    Ok(table)
}

pub fn load_analytic_params(path: &Path) -> Result<AnalyticParams> {
    let params: AnalyticParams = load_toml(path)?;
    params.validate().map_err(|e| in_file(path, e))?;
    Ok(params)
}

pub fn load_breakpoints(path: &Path) -> Result<BreakpointTable> {
    let table: BreakpointTable = load_toml(path)?;
    table.validate().map_err(|e| in_file(path, e))?;
    Ok(table)
}

pub fn load_registry(path: &Path) -> Result<ServiceDescription> {
    load_toml(path)
}

pub fn load_workload_params(path: &Path) -> Result<WorkloadParams> {
    let params: WorkloadParams = load_toml(path)?;
    params.validate().map_err(|e| in_file(path, e))?;
    Ok(params)
}

pub fn metrics_to_json(m: &Metrics) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("metrics serialize");
    s.push('\n');
    s
}

pub fn metrics_from_json(path: &Path) -> Result<Metrics> {
    serde_json::from_str(&read_text(path)?).map_err(|e| in_file(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct WorkloadRow {
    time_ms: u64,
    user: u32,
    kind: String,
    id: u64,
    parent: Option<u64>,
    size: u64,
    /// `|`-separated.
    tags: String,
}

/// One row per event: `time_ms,user,kind,id,parent,size,tags`.
pub fn workload_to_csv(w: &Workload) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    for e in &w.events {
        let row = WorkloadRow {
            time_ms: e.time.0,
            user: e.user.0,
            kind: e.kind.as_str().into(),
            id: e.id.0,
            parent: e.parent.map(|p| p.0),
            size: e.size,
            tags: e.tags.iter().cloned().collect::<Vec<_>>().join("|"),
        };
        out.serialize(row).map_err(Error::validation)?;
    }
    let bytes = out.into_inner().map_err(Error::validation)?;
    String::from_utf8(bytes).map_err(Error::validation)
}

/// Parses a workload written by [`workload_to_csv`]. The user count is
/// `n_users` when given, otherwise one past the largest user index.
pub fn workload_from_csv(text: &str, n_users: Option<u32>) -> Result<Workload> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let mut events = Vec::new();
    for (i, row) in rd.deserialize::<WorkloadRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Validation(format!("workload line {line}: {e}")))?;
        let kind = EventKind::parse(&row.kind).ok_or_else(|| Error::Validation(format!("workload line {line}: unknown kind '{}'", row.kind)))?;
        let tags: BTreeSet<String> = row.tags.split('|').filter(|t| !t.is_empty()).map(String::from).collect();
        events.push(WorkloadEvent {
            time: SimTime(row.time_ms),
            user: PeerId(row.user),
            kind,
            id: ContentId(row.id),
            parent: row.parent.map(ContentId),
            tags,
            size: row.size,
        });
    }
    let n_users = n_users.unwrap_or_else(|| events.iter().map(|e| e.user.0 + 1).max().unwrap_or(0));
    let w = Workload { n_users, events };
    w.validate().map_err(|e| Error::Validation(format!("workload: {e}")))?;
    Ok(w)
}
