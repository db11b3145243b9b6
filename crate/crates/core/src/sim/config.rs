use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dissemination::{ContentKind, DisseminationParams};
use crate::group_net::{BridgeDecl, PeerId, ThroughputModelParams, DEFAULT_MAX_GROUP_SIZE, MAX_INTENT};
use crate::mobility::{MobilityParams, Point};
use crate::sensor_service::Role;
use crate::time::UtcMillis;
use crate::workload::{WorkloadParams, DEFAULT_VOCABULARY};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("duplicate peer id {0}")]
    DuplicatePeer(PeerId),
    #[error("{field} references undefined peer {peer}")]
    UnknownPeer { field: &'static str, peer: PeerId },
}

fn invalid(field: &'static str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.to_string() }
}

fn yes() -> bool {
    true
}

fn default_intent() -> u8 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerConfig {
    pub id: PeerId,
    #[serde(default = "citizen")]
    pub role: Role,
    /// Group-owner intent, 0..=15.
    #[serde(default = "default_intent")]
    pub intent: u8,
    /// Fixed position; peers without one move by random waypoint.
    #[serde(default)]
    pub position: Option<Point>,
    /// Overrides the profile defaults when present.
    #[serde(default)]
    pub interests: Option<BTreeMap<String, f64>>,
    /// Cache bytes; the dissemination default when absent.
    #[serde(default)]
    pub buffer: Option<u64>,
    #[serde(default = "yes")]
    pub share_in_proximity: bool,
}

fn citizen() -> Role {
    Role::Citizen
}

impl PeerConfig {
    pub fn new(id: u32) -> Self {
        PeerConfig {
            id: PeerId(id),
            role: Role::Citizen,
            intent: default_intent(),
            position: None,
            interests: None,
            buffer: None,
            share_in_proximity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileDefaults {
    /// Interests given to peers that declare none.
    pub interests: BTreeMap<String, f64>,
    /// Draw each vocabulary tag's weight uniformly from [0, 1] instead.
    pub random: bool,
    pub vocabulary: Vec<String>,
}

impl Default for ProfileDefaults {
    fn default() -> Self {
        ProfileDefaults {
            interests: BTreeMap::new(),
            random: false,
            vocabulary: DEFAULT_VOCABULARY.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Ignore throughput: every contact tick can move any amount of data.
    pub unbounded: bool,
    /// Seconds of contact consumed by the first meeting of a pair.
    pub pairing_setup: f64,
    pub max_group_size: usize,
    pub throughput: ThroughputModelParams,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            unbounded: false,
            pairing_setup: 2.0,
            max_group_size: DEFAULT_MAX_GROUP_SIZE,
            throughput: ThroughputModelParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessPoint {
    pub position: Point,
    /// Metres.
    pub range: f64,
    /// Mbps.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensingConfig {
    /// Seconds between sensor data refreshes.
    pub fetch_interval: f64,
    /// Seconds of observations covered by each fetch.
    pub window: f64,
    /// Tags carried by sensor data items.
    pub tags: Vec<String>,
    /// Sensors to query; all registered sensors when empty.
    pub sensor_ids: Vec<String>,
}

impl Default for SensingConfig {
    fn default() -> Self {
        SensingConfig { fetch_interval: 300.0, window: 3600.0, tags: alloc::vec!["air".to_string()], sensor_ids: Vec::new() }
    }
}

/// A content item created at a fixed time by the scenario script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedContent {
    /// Seconds.
    pub time: f64,
    pub author: PeerId,
    #[serde(default = "post")]
    pub kind: ContentKind,
    pub tags: BTreeSet<String>,
    pub size: u64,
    #[serde(default = "yes")]
    pub share_in_proximity: bool,
    #[serde(default = "yes")]
    pub store_remotely: bool,
    #[serde(default)]
    pub experts_only: bool,
}

fn post() -> ContentKind {
    ContentKind::Post
}

/// The peer asks to push its own shareable content to the server. The upload
/// happens once the peer is in WLAN range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadDecl {
    pub time: f64,
    pub peer: PeerId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Seconds.
    pub duration: f64,
    /// Seconds between contact evaluations.
    pub tick: f64,
    /// Wall-clock instant of simulated time zero.
    pub start_utc: UtcMillis,
    /// Peers with ids 0..population that are not listed get defaults.
    pub population: u32,
    pub peers: Vec<PeerConfig>,
    pub profiles: ProfileDefaults,
    pub mobility: MobilityParams,
    pub network: NetworkConfig,
    pub dissemination: DisseminationParams,
    /// Generated social workload; users map to peers in id order.
    pub workload: Option<WorkloadParams>,
    pub content: Vec<ScriptedContent>,
    pub bridges: Vec<BridgeDecl>,
    pub access_points: Vec<AccessPoint>,
    pub sensing: SensingConfig,
    pub uploads: Vec<UploadDecl>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            duration: 3600.0,
            tick: 1.0,
            start_utc: UtcMillis::parse_iso(b"2014-06-01T09:00:00.000Z").expect("valid literal"),
            population: 0,
            peers: Vec::new(),
            profiles: ProfileDefaults::default(),
            mobility: MobilityParams::default(),
            network: NetworkConfig::default(),
            dissemination: DisseminationParams::default(),
            workload: None,
            content: Vec::new(),
            bridges: Vec::new(),
            access_points: Vec::new(),
            sensing: SensingConfig::default(),
            uploads: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    /// Listed peers plus defaults for the rest of the population, by id.
    pub fn resolved_peers(&self) -> Vec<PeerConfig> {
        let mut by_id: BTreeMap<PeerId, PeerConfig> = (0..self.population).map(|i| (PeerId(i), PeerConfig::new(i))).collect();
        for p in &self.peers {
            by_id.insert(p.id, p.clone());
        }
        by_id.into_values().collect()
    }

    pub fn tick_ms(&self) -> u64 {
        libm::round(self.tick * 1000.0) as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tick.is_finite() && self.tick > 0.0) || self.tick_ms() == 0 {
            return Err(invalid("tick", "must be at least one millisecond"));
        }
        if !(self.duration.is_finite() && self.duration >= self.tick) {
            return Err(invalid("duration", "must be at least one tick"));
        }
        let mut seen = BTreeSet::new();
        for p in &self.peers {
            if !seen.insert(p.id) {
                return Err(ConfigError::DuplicatePeer(p.id));
            }
            if p.intent > MAX_INTENT {
                return Err(invalid("peers.intent", "must be at most 15"));
            }
            if let Some(pos) = p.position {
                if !self.mobility.contains(pos) {
                    return Err(invalid("peers.position", "outside the simulation area"));
                }
            }
            if let Some(ws) = &p.interests {
                check_weights("peers.interests", ws)?;
            }
            if p.buffer == Some(0) {
                return Err(invalid("peers.buffer", "must be positive"));
            }
        }
        let peers: BTreeSet<PeerId> = self.resolved_peers().iter().map(|p| p.id).collect();
        let known = |field: &'static str, peer: PeerId| {
            if peers.contains(&peer) {
                Ok(())
            } else {
                Err(ConfigError::UnknownPeer { field, peer })
            }
        };
        check_weights("profiles.interests", &self.profiles.interests)?;
        self.mobility.validate().map_err(|e| invalid("mobility", e))?;
        self.network.throughput.validate().map_err(|e| invalid("network.throughput", e))?;
        if self.network.max_group_size < 2 {
            return Err(invalid("network.max_group_size", "a group needs room for a client"));
        }
        if !(self.network.pairing_setup.is_finite() && self.network.pairing_setup >= 0.0) {
            return Err(invalid("network.pairing_setup", "must be nonnegative"));
        }
        self.dissemination.validate().map_err(|e| invalid("dissemination", e))?;
        if self.dissemination.buffer_capacity == 0 {
            return Err(invalid("dissemination.buffer_capacity", "must be positive"));
        }
        if let Some(w) = &self.workload {
            w.validate().map_err(|e| invalid("workload", e))?;
        }
        for c in &self.content {
            known("content.author", c.author)?;
            if !(c.time.is_finite() && c.time >= 0.0) {
                return Err(invalid("content.time", "must be nonnegative"));
            }
            if c.tags.is_empty() || c.tags.iter().any(|t| t.is_empty()) {
                return Err(invalid("content.tags", "at least one nonempty tag required"));
            }
            if c.size == 0 {
                return Err(invalid("content.size", "must be positive"));
            }
        }
        for b in &self.bridges {
            known("bridges.bridge", b.bridge)?;
            known("bridges.remote_owner", b.remote_owner)?;
            if b.bridge == b.remote_owner {
                return Err(invalid("bridges", "bridge and remote owner must differ"));
            }
        }
        for ap in &self.access_points {
            if !(ap.range > 0.0 && ap.range.is_finite() && ap.rate > 0.0 && ap.rate.is_finite()) {
                return Err(invalid("access_points", "range and rate must be positive"));
            }
        }
        if !(self.sensing.fetch_interval > 0.0 && self.sensing.fetch_interval.is_finite()) {
            return Err(invalid("sensing.fetch_interval", "must be positive"));
        }
        if !(self.sensing.window >= 0.0 && self.sensing.window.is_finite()) {
            return Err(invalid("sensing.window", "must be nonnegative"));
        }
        if self.sensing.tags.is_empty() {
            return Err(invalid("sensing.tags", "sensor items need at least one tag"));
        }
        for u in &self.uploads {
            known("uploads.peer", u.peer)?;
            if !(u.time.is_finite() && u.time >= 0.0) {
                return Err(invalid("uploads.time", "must be nonnegative"));
            }
        }
        Ok(())
    }
}

fn check_weights(field: &'static str, ws: &BTreeMap<String, f64>) -> Result<(), ConfigError> {
    for (t, w) in ws {
        if t.is_empty() || !(0.0..=1.0).contains(w) {
            return Err(invalid(field, "weights must be in [0, 1] with nonempty tags"));
        }
    }
    Ok(())
}
