//! In-memory sensor observation service and air-quality index.
//!
//! The service holds station metadata, observation records per sensor and
//! the uploads it has accepted. Loading from and persisting to disk is the
//! `citysim` crate's job.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dissemination::{ContentItem, ContentKind};
use crate::sme::{deserialize_observation, CodecError, GeoPoint, ObservationSet, SensorDescription, TimeWindow, ValueRecord};
use crate::time::UtcMillis;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AqiError {
    #[error("negative concentration {value} for {property}")]
    Negative { property: String, value: f64 },
    #[error("no breakpoints for {0}")]
    UnknownProperty(String),
    #[error("breakpoints for {property}: {reason}")]
    Table { property: String, reason: &'static str },
}

/// Piecewise-linear mapping from concentration to a 0..=100 subindex, per
/// observed property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakpointTable {
    /// `(concentration, subindex)` pairs in increasing concentration.
    pub properties: BTreeMap<String, Vec<(f64, f64)>>,
}

impl Default for BreakpointTable {
    fn default() -> Self {
        let row = |cs: [f64; 5]| -> Vec<(f64, f64)> { cs.into_iter().zip([0.0, 25.0, 50.0, 75.0, 100.0]).collect() };
        let mut properties = BTreeMap::new();
        properties.insert("PM10".into(), row([0.0, 25.0, 50.0, 90.0, 180.0]));
        properties.insert("PM2.5".into(), row([0.0, 15.0, 30.0, 55.0, 110.0]));
        properties.insert("NO2".into(), row([0.0, 50.0, 100.0, 200.0, 400.0]));
        properties.insert("O3".into(), row([0.0, 60.0, 120.0, 180.0, 240.0]));
        BreakpointTable { properties }
    }
}

impl BreakpointTable {
    pub fn validate(&self) -> Result<(), AqiError> {
        for (property, pts) in &self.properties {
            let bad = |reason| Err(AqiError::Table { property: property.clone(), reason });
            if pts.len() < 2 {
                return bad("need at least two breakpoints");
            }
            if pts[0] != (0.0, 0.0) {
                return bad("first breakpoint must be (0, 0)");
            }
            if pts[pts.len() - 1].1 != 100.0 {
                return bad("last subindex must be 100");
            }
            for w in pts.windows(2) {
                if !(w[0].0 < w[1].0) || !w[1].0.is_finite() {
                    return bad("concentrations must be finite and strictly increasing");
                }
                if !(w[0].1 <= w[1].1) || !(0.0..=100.0).contains(&w[1].1) {
                    return bad("subindexes must be nondecreasing within [0, 100]");
                }
            }
        }
        Ok(())
    }

    pub fn subindex(&self, property: &str, concentration: f64) -> Result<f64, AqiError> {
        let pts = self.properties.get(property).ok_or_else(|| AqiError::UnknownProperty(property.into()))?;
        if !(concentration >= 0.0) {
            return Err(AqiError::Negative { property: property.into(), value: concentration });
        }
        let last = pts[pts.len() - 1];
        if concentration >= last.0 {
            return Ok(last.1.min(100.0));
        }
        let i = pts.partition_point(|p| p.0 <= concentration) - 1;
        let (c0, s0) = pts[i];
        let (c1, s1) = pts[i + 1];
        Ok(s0 + (concentration - c0) / (c1 - c0) * (s1 - s0))
    }
}

/// Maximum per-property subindex. An empty reading set scores 0.
pub fn compute_air_quality_index(readings: &BTreeMap<String, f64>, table: &BreakpointTable) -> Result<f64, AqiError> {
    let mut worst: f64 = 0.0;
    for (property, c) in readings {
        worst = worst.max(table.subindex(property, *c)?);
    }
    Ok(worst.clamp(0.0, 100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorBand {
    Green,
    Yellow,
    Orange,
    Red,
}

impl ColorBand {
    /// green [0,25), yellow [25,50), orange [50,75), red [75,100].
    pub fn of(value: f64) -> Self {
        if value < 25.0 {
            ColorBand::Green
        } else if value < 50.0 {
            ColorBand::Yellow
        } else if value < 75.0 {
            ColorBand::Orange
        } else {
            ColorBand::Red
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirQualityIndex {
    pub station_id: String,
    pub value: f64,
    pub color_band: ColorBand,
    pub computed_at: UtcMillis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Citizen,
    Expert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Raw,
    Index,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub station_id: String,
    pub location: GeoPoint,
    pub sensors: Vec<SensorDescription>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ServiceDescription {
    pub service_id: String,
    #[serde(default)]
    pub stations: Vec<Station>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ServiceError {
    #[error("duplicate station id {0}")]
    DuplicateStation(String),
    #[error("station {0} has no sensors")]
    EmptyStation(String),
    #[error("duplicate sensor id {0}")]
    DuplicateSensor(String),
    #[error("unknown sensor {0}")]
    UnknownSensor(String),
    #[error("raw observations require the expert role")]
    Unauthorized,
    #[error("request names no sensors")]
    EmptyRequest,
    #[error("window start after end")]
    BadWindow,
    #[error("content must carry at least one tag")]
    Untagged,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Aqi(#[from] AqiError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observations {
    Raw(Vec<ObservationSet>),
    Index(Vec<AirQualityIndex>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Upload {
    pub receipt: u64,
    pub content: ContentItem,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorService {
    description: ServiceDescription,
    /// sensor id -> (station index, sensor index)
    sensors: BTreeMap<String, (usize, usize)>,
    records: BTreeMap<String, Vec<ValueRecord>>,
    table: BreakpointTable,
    uploads: Vec<Upload>,
}

impl SensorService {
    /// Stations are reordered by id and sensors within a station by id.
    pub fn new(mut description: ServiceDescription, table: BreakpointTable) -> Result<Self, ServiceError> {
        table.validate()?;
        description.stations.sort_by(|a, b| a.station_id.cmp(&b.station_id));
        let mut station_ids = BTreeSet::new();
        let mut sensors = BTreeMap::new();
        for (si, st) in description.stations.iter_mut().enumerate() {
            if !station_ids.insert(st.station_id.clone()) {
                return Err(ServiceError::DuplicateStation(st.station_id.clone()));
            }
            if st.sensors.is_empty() {
                return Err(ServiceError::EmptyStation(st.station_id.clone()));
            }
            st.sensors.sort_by(|a, b| a.sensor_id.cmp(&b.sensor_id));
            for (k, s) in st.sensors.iter().enumerate() {
                s.validate()?;
                if sensors.insert(s.sensor_id.clone(), (si, k)).is_some() {
                    return Err(ServiceError::DuplicateSensor(s.sensor_id.clone()));
                }
            }
        }
        Ok(SensorService { description, sensors, records: BTreeMap::new(), table, uploads: Vec::new() })
    }

    pub fn get_service_description(&self) -> &ServiceDescription {
        &self.description
    }

    pub fn breakpoints(&self) -> &BreakpointTable {
        &self.table
    }

    pub fn sensor(&self, id: &str) -> Option<&SensorDescription> {
        self.sensors.get(id).map(|&(s, k)| &self.description.stations[s].sensors[k])
    }

    pub fn sensor_ids(&self) -> impl Iterator<Item = &str> {
        self.sensors.keys().map(String::as_str)
    }

    /// Adds the records of `set`, keeping each sensor's series in timestamp
    /// order. Records with equal timestamps keep arrival order.
    pub fn ingest(&mut self, set: ObservationSet) -> Result<(), ServiceError> {
        set.check()?;
        if !self.sensors.contains_key(&set.sensor_id) {
            return Err(ServiceError::UnknownSensor(set.sensor_id));
        }
        let series = self.records.entry(set.sensor_id).or_default();
        series.extend(set.records);
        series.sort_by_key(|r| r.timestamp);
        Ok(())
    }

    fn in_window<'a>(&'a self, id: &str, window: &TimeWindow) -> &'a [ValueRecord] {
        let series = self.records.get(id).map(Vec::as_slice).unwrap_or(&[]);
        let lo = series.partition_point(|r| r.timestamp < window.start);
        let hi = series.partition_point(|r| r.timestamp <= window.end);
        &series[lo..hi]
    }

    pub fn get_observations(&self, sensor_ids: &[&str], window: TimeWindow, mode: Mode, role: Role) -> Result<Observations, ServiceError> {
        if sensor_ids.is_empty() {
            return Err(ServiceError::EmptyRequest);
        }
        if window.start > window.end {
            return Err(ServiceError::BadWindow);
        }
        if mode == Mode::Raw && role != Role::Expert {
            return Err(ServiceError::Unauthorized);
        }
        let mut wanted = BTreeSet::new();
        for id in sensor_ids {
            if !self.sensors.contains_key(*id) {
                return Err(ServiceError::UnknownSensor((*id).into()));
            }
            wanted.insert(*id);
        }
        match mode {
            Mode::Raw => Ok(Observations::Raw(
                wanted
                    .into_iter()
                    .filter_map(|id| {
                        let recs = self.in_window(id, &window);
                        (!recs.is_empty()).then(|| ObservationSet { sensor_id: id.into(), window, records: recs.to_vec() })
                    })
                    .collect(),
            )),
            Mode::Index => {
                // station index -> property -> latest (timestamp, value)
                let mut latest: BTreeMap<usize, BTreeMap<String, (UtcMillis, f64)>> = BTreeMap::new();
                for id in wanted {
                    let (si, k) = self.sensors[id];
                    let property = &self.description.stations[si].sensors[k].observed_property;
                    if !self.table.properties.contains_key(property) {
                        continue;
                    }
                    if let Some(last) = self.in_window(id, &window).last() {
                        let slot = latest.entry(si).or_default();
                        match slot.get(property) {
                            Some((t, _)) if *t > last.timestamp => {}
                            _ => {
                                slot.insert(property.clone(), (last.timestamp, last.value));
                            }
                        }
                    }
                }
                let mut out = Vec::new();
                for (si, props) in latest {
                    let readings: BTreeMap<String, f64> = props.into_iter().map(|(p, (_, v))| (p, v)).collect();
                    let value = compute_air_quality_index(&readings, &self.table)?;
                    out.push(AirQualityIndex {
                        station_id: self.description.stations[si].station_id.clone(),
                        value,
                        color_band: ColorBand::of(value),
                        computed_at: window.end,
                    });
                }
                Ok(Observations::Index(out))
            }
        }
    }

    /// Accepts explicitly uploaded content. Sensor-data payloads must decode
    /// as an SME observation. Receipts start at 1 and are never reused.
    pub fn upload_user_content(&mut self, content: ContentItem, payload: Vec<u8>) -> Result<u64, ServiceError> {
        if content.tags.is_empty() {
            return Err(ServiceError::Untagged);
        }
        if content.kind == ContentKind::SensorData {
            deserialize_observation(&payload)?;
        }
        let receipt = self.uploads.len() as u64 + 1;
        self.uploads.push(Upload { receipt, content, payload });
        Ok(receipt)
    }

    pub fn upload(&self, receipt: u64) -> Option<&Upload> {
        receipt.checked_sub(1).and_then(|i| self.uploads.get(i as usize))
    }

    pub fn uploads(&self) -> &[Upload] {
        &self.uploads
    }
}
