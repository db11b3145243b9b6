//! Deterministic discrete-event simulation of peers, groups, content and
//! sensor data.

mod config;
mod engine;
mod metrics;
mod trace;

pub use config::{
    AccessPoint, ConfigError, NetworkConfig, PeerConfig, ProfileDefaults, ScenarioConfig, ScriptedContent, SensingConfig, UploadDecl,
};
pub use engine::{run, Engine, EngineInputs, RunOutput, SimError};
pub use metrics::{compute_metrics, Metrics};
pub use trace::{parse_trace, write_trace, TraceError, TraceEvent, TraceKind, TRACE_HEADER};
