//! Sensor registry and observation files on disk.
//!
//! A store is a registry TOML describing stations and sensors plus a
//! directory of `.sme` observation files. Readers share the service through
//! a read lock; ingesting and uploading take the write lock, so there is a
//! single writer at a time.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{PoisonError, RwLock};

use citysim_core::dissemination::ContentItem;
use citysim_core::sensor_service::{BreakpointTable, Mode, Observations, Role, SensorService, Upload};
use citysim_core::sme::{deserialize_observation, serialize_observation, ObservationSet, TimeWindow};

use crate::error::{in_file, Error, Result};
use crate::formats::{load_breakpoints, load_registry, read_bytes, write_atomic};

/// Observation files of `dir` in name order.
pub fn observation_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "sme") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn read_observation(path: &Path) -> Result<ObservationSet> {
    deserialize_observation(&read_bytes(path)?).map_err(|e| in_file(path, e))
}

/// Writes `set` as `<sensor>-<start ms>.sme` under `dir`.
pub fn write_observation(dir: &Path, set: &ObservationSet) -> Result<PathBuf> {
    let bytes = serialize_observation(set).map_err(Error::validation)?;
    let path = dir.join(format!("{}-{}.sme", set.sensor_id, set.window.start.0));
    write_atomic(&path, &bytes)?;
    Ok(path)
}

/// Builds a service from a registry, an optional breakpoint table and an
/// optional directory of observation files.
pub fn load_service(registry: &Path, breakpoints: Option<&Path>, observations: Option<&Path>) -> Result<SensorService> {
    let description = load_registry(registry)?;
    let table = match breakpoints {
        Some(p) => load_breakpoints(p)?,
        None => BreakpointTable::default(),
    };
    let mut service = SensorService::new(description, table).map_err(|e| in_file(registry, e))?;
    if let Some(dir) = observations {
        for path in observation_files(dir)? {
            let set = read_observation(&path)?;
            service.ingest(set).map_err(|e| in_file(&path, e))?;
        }
    }
    Ok(service)
}

/// Persists uploads as `<receipt>.json` (content metadata) and
/// `<receipt>.bin` (payload).
pub fn persist_uploads(dir: &Path, uploads: &[Upload]) -> Result<()> {
    if uploads.is_empty() {
        return Ok(());
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for u in uploads {
        let meta = serde_json::to_string_pretty(&u.content).map_err(Error::validation)?;
        write_atomic(&dir.join(format!("{}.json", u.receipt)), meta.as_bytes())?;
        write_atomic(&dir.join(format!("{}.bin", u.receipt)), &u.payload)?;
    }
    Ok(())
}

pub struct SensorStore {
    service: RwLock<SensorService>,
    uploads_dir: Option<PathBuf>,
}

impl SensorStore {
    pub fn new(service: SensorService, uploads_dir: Option<PathBuf>) -> Self {
        SensorStore { service: RwLock::new(service), uploads_dir }
    }

    pub fn open(registry: &Path, breakpoints: Option<&Path>, observations: Option<&Path>) -> Result<Self> {
        Ok(SensorStore::new(load_service(registry, breakpoints, observations)?, None))
    }

    /// A copy of the current service state.
    pub fn snapshot(&self) -> SensorService {
        self.service.read().unwrap_or_else(PoisonError::into_inner).clone()
    }

    pub fn get_observations(&self, sensor_ids: &[&str], window: TimeWindow, mode: Mode, role: Role) -> Result<Observations> {
        let service = self.service.read().unwrap_or_else(PoisonError::into_inner);
        service.get_observations(sensor_ids, window, mode, role).map_err(Error::validation)
    }

    pub fn ingest_file(&self, path: &Path) -> Result<()> {
        let set = read_observation(path)?;
        let mut service = self.service.write().unwrap_or_else(PoisonError::into_inner);
        service.ingest(set).map_err(|e| in_file(path, e))
    }

    /// Stores the upload and, when the store has an upload directory,
    /// writes it to disk before returning the receipt.
    pub fn upload(&self, content: ContentItem, payload: Vec<u8>) -> Result<u64> {
        let mut service = self.service.write().unwrap_or_else(PoisonError::into_inner);
        let receipt = service.upload_user_content(content, payload).map_err(Error::validation)?;
        if let (Some(dir), Some(u)) = (&self.uploads_dir, service.upload(receipt)) {
            persist_uploads(dir, std::slice::from_ref(u))?;
        }
        Ok(receipt)
    }
}
