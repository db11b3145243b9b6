//! Lightweight SWE-compatible text encoding for sensor descriptions and
//! observation sets.
//!
//! # Observation wire format
//!
//! ```text
//! SME/1.0 OBSERVATION\n
//! sensor_id=<id>\n
//! window=<start>/<end>\n
//! count=<n>\n
//! <spaces up to byte offset 1946>
//! <n record lines of 48 bytes>
//! ```
//!
//! A record line is a 24-byte ISO-8601 UTC timestamp, `,`, a 21-byte signed
//! fixed-point decimal with six fractional digits, `;` and `\n`. The encoded
//! length is therefore always [`ENVELOPE_SIZE`] + [`RECORD_SIZE`] · n.
//!
//! # Sensor description format
//!
//! `SME/1.0 SENSOR\n` followed by one `key=value\n` line per field in a fixed
//! order. Reals use the shortest representation that parses back exactly.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::time::{TimeError, UtcMillis, ISO_LEN};

pub const ENVELOPE_SIZE: usize = 1946;
pub const RECORD_SIZE: usize = 48;
pub const VALUE_WIDTH: usize = 21;
pub const VALUE_DECIMALS: usize = 6;

const OBSERVATION_MAGIC: &str = "SME/1.0 OBSERVATION\n";
const SENSOR_MAGIC: &str = "SME/1.0 SENSOR\n";

/// Largest magnitude that fits the fixed-width value column.
pub const VALUE_LIMIT: f64 = 1e13;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CodecError {
    #[error("parse error at byte {offset}: {reason}")]
    Envelope { offset: usize, reason: &'static str },
    #[error("parse error in record {index}: {reason}")]
    Record { index: usize, reason: &'static str },
    #[error("integrity error: header declares {declared} records, body holds {found}")]
    Count { declared: usize, found: usize },
    #[error("validation error in record {index}: {reason}")]
    Invalid { index: usize, reason: &'static str },
    #[error("validation error: {0}")]
    Field(&'static str),
    #[error("value {value} of record {index} is not representable in the fixed-width column")]
    Unrepresentable { index: usize, value: f64 },
    #[error(transparent)]
    Time(#[from] TimeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorDescription {
    pub sensor_id: String,
    #[serde(default)]
    pub vendor: String,
    pub observed_property: String,
    pub unit: String,
    pub sampling_frequency_hz: f64,
    pub valid_range: Range,
    pub location: GeoPoint,
}

impl SensorDescription {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.sensor_id.is_empty() {
            return Err(CodecError::Field("sensor_id must be nonempty"));
        }
        for s in [&self.sensor_id, &self.vendor, &self.observed_property, &self.unit] {
            if s.contains('\n') {
                return Err(CodecError::Field("text fields must not contain newlines"));
            }
        }
        if !(self.sampling_frequency_hz.is_finite() && self.sampling_frequency_hz > 0.0) {
            return Err(CodecError::Field("sampling_frequency_hz must be positive"));
        }
        if !(self.valid_range.min < self.valid_range.max) {
            return Err(CodecError::Field("valid_range.min must be below valid_range.max"));
        }
        if !(self.location.lat.is_finite() && self.location.lon.is_finite()) {
            return Err(CodecError::Field("location must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRecord {
    pub timestamp: UtcMillis,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: UtcMillis,
    pub end: UtcMillis,
}

impl TimeWindow {
    pub fn contains(&self, t: UtcMillis) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub sensor_id: String,
    pub window: TimeWindow,
    pub records: Vec<ValueRecord>,
}

impl ObservationSet {
    /// Structural invariants: ordered records inside the window.
    pub fn check(&self) -> Result<(), CodecError> {
        if self.sensor_id.is_empty() || self.sensor_id.contains('\n') {
            return Err(CodecError::Field("sensor_id must be a nonempty single line"));
        }
        if self.window.start > self.window.end {
            return Err(CodecError::Field("window start after end"));
        }
        let mut prev: Option<UtcMillis> = None;
        for (index, r) in self.records.iter().enumerate() {
            if prev.is_some_and(|p| r.timestamp < p) {
                return Err(CodecError::Invalid { index, reason: "records out of timestamp order" });
            }
            if !self.window.contains(r.timestamp) {
                return Err(CodecError::Invalid { index, reason: "timestamp outside window" });
            }
            prev = Some(r.timestamp);
        }
        Ok(())
    }

    /// Opt-in check of every value against a sensor's valid range.
    pub fn validate_against(&self, desc: &SensorDescription) -> Result<(), CodecError> {
        self.check()?;
        if desc.sensor_id != self.sensor_id {
            return Err(CodecError::Field("description is for a different sensor"));
        }
        for (index, r) in self.records.iter().enumerate() {
            if !(desc.valid_range.min <= r.value && r.value <= desc.valid_range.max) {
                return Err(CodecError::Invalid { index, reason: "value outside valid range" });
            }
        }
        Ok(())
    }
}

/// Exact encoded size of an observation with `n_records` records.
pub const fn estimate_payload_size(n_records: usize) -> usize {
    ENVELOPE_SIZE + RECORD_SIZE * n_records
}

fn write_value(out: &mut Vec<u8>, index: usize, value: f64) -> Result<(), CodecError> {
    let bad = CodecError::Unrepresentable { index, value };
    if !value.is_finite() || libm::fabs(value) >= VALUE_LIMIT {
        return Err(bad);
    }
    let mut cell = arrayish::Cell::new();
    write!(cell, "{:+0w$.d$}", value, w = VALUE_WIDTH, d = VALUE_DECIMALS).map_err(|_| bad.clone())?;
    let text = cell.as_bytes();
    if text.len() != VALUE_WIDTH {
        return Err(bad);
    }
    // Round-trip identity is part of the contract, so values carrying more
    // precision than the column holds are refused.
    let parsed: f64 = core::str::from_utf8(text).ok().and_then(|s| s.parse().ok()).ok_or(bad.clone())?;
    if parsed != value {
        return Err(bad);
    }
    out.extend_from_slice(text);
    Ok(())
}

mod arrayish {
    /// Fixed stack buffer for formatting one value cell.
    pub struct Cell {
        buf: [u8; 32],
        len: usize,
    }

    impl Cell {
        pub fn new() -> Self {
            Cell { buf: [0; 32], len: 0 }
        }

        pub fn as_bytes(&self) -> &[u8] {
            &self.buf[..self.len]
        }
    }

    impl core::fmt::Write for Cell {
        fn write_str(&mut self, s: &str) -> core::fmt::Result {
            let b = s.as_bytes();
            if self.len + b.len() > self.buf.len() {
                return Err(core::fmt::Error);
            }
            self.buf[self.len..self.len + b.len()].copy_from_slice(b);
            self.len += b.len();
            Ok(())
        }
    }
}

pub fn serialize_observation(obs: &ObservationSet) -> Result<Vec<u8>, CodecError> {
    obs.check()?;
    let header = format!(
        "{OBSERVATION_MAGIC}sensor_id={}\nwindow={}/{}\ncount={}\n",
        obs.sensor_id,
        obs.window.start.to_iso()?,
        obs.window.end.to_iso()?,
        obs.records.len()
    );
    if header.len() > ENVELOPE_SIZE {
        return Err(CodecError::Field("header does not fit the envelope"));
    }
    let mut out = Vec::with_capacity(estimate_payload_size(obs.records.len()));
    out.extend_from_slice(header.as_bytes());
    out.resize(ENVELOPE_SIZE, b' ');
    let mut ts = [0u8; ISO_LEN];
    for (index, r) in obs.records.iter().enumerate() {
        r.timestamp.write_iso(&mut ts)?;
        out.extend_from_slice(&ts);
        out.push(b',');
        write_value(&mut out, index, r.value)?;
        out.extend_from_slice(b";\n");
    }
    debug_assert_eq!(out.len(), estimate_payload_size(obs.records.len()));
    Ok(out)
}

/// Cursor over `key=value\n` header lines.
struct Lines<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lines<'a> {
    fn expect_literal(&mut self, lit: &str) -> Result<(), CodecError> {
        let end = self.pos + lit.len();
        if self.bytes.len() < end || &self.bytes[self.pos..end] != lit.as_bytes() {
            return Err(CodecError::Envelope { offset: self.pos, reason: "missing format tag" });
        }
        self.pos = end;
        Ok(())
    }

    fn field(&mut self, key: &str) -> Result<(&'a str, usize), CodecError> {
        let start = self.pos;
        let rest = &self.bytes[start..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(CodecError::Envelope { offset: start, reason: "unterminated header line" })?;
        let line = core::str::from_utf8(&rest[..nl])
            .map_err(|_| CodecError::Envelope { offset: start, reason: "header is not UTF-8" })?;
        let value = line
            .strip_prefix(key)
            .and_then(|l| l.strip_prefix('='))
            .ok_or(CodecError::Envelope { offset: start, reason: "unexpected header key" })?;
        self.pos = start + nl + 1;
        Ok((value, start + key.len() + 1))
    }
}

fn parse_window(text: &str, offset: usize) -> Result<TimeWindow, CodecError> {
    let (a, b) = text
        .split_once('/')
        .ok_or(CodecError::Envelope { offset, reason: "window must be <start>/<end>" })?;
    let start = UtcMillis::parse_iso(a.as_bytes())
        .map_err(|_| CodecError::Envelope { offset, reason: "bad window start" })?;
    let end = UtcMillis::parse_iso(b.as_bytes())
        .map_err(|_| CodecError::Envelope { offset: offset + a.len() + 1, reason: "bad window end" })?;
    Ok(TimeWindow { start, end })
}

pub fn deserialize_observation(payload: &[u8]) -> Result<ObservationSet, CodecError> {
    let mut lines = Lines { bytes: payload, pos: 0 };
    lines.expect_literal(OBSERVATION_MAGIC)?;
    let (sensor_id, _) = lines.field("sensor_id")?;
    let (window, off) = lines.field("window")?;
    let window = parse_window(window, off)?;
    let (count, off) = lines.field("count")?;
    let declared: usize = count
        .parse()
        .map_err(|_| CodecError::Envelope { offset: off, reason: "count is not an integer" })?;
    if payload.len() < ENVELOPE_SIZE {
        return Err(CodecError::Envelope { offset: payload.len(), reason: "envelope truncated" });
    }
    if let Some(p) = payload[lines.pos..ENVELOPE_SIZE].iter().position(|&b| b != b' ') {
        return Err(CodecError::Envelope { offset: lines.pos + p, reason: "padding must be spaces" });
    }
    let body = &payload[ENVELOPE_SIZE..];
    if body.len() % RECORD_SIZE != 0 {
        return Err(CodecError::Record { index: body.len() / RECORD_SIZE, reason: "partial record line" });
    }
    let found = body.len() / RECORD_SIZE;
    if found != declared {
        return Err(CodecError::Count { declared, found });
    }
    let mut records = Vec::with_capacity(found);
    for (index, line) in body.chunks_exact(RECORD_SIZE).enumerate() {
        records.push(parse_record(index, line)?);
    }
    let obs = ObservationSet { sensor_id: sensor_id.to_string(), window, records };
    obs.check()?;
    Ok(obs)
}

fn parse_record(index: usize, line: &[u8]) -> Result<ValueRecord, CodecError> {
    let value_end = ISO_LEN + 1 + VALUE_WIDTH;
    if line[ISO_LEN] != b',' || &line[value_end..] != b";\n" {
        return Err(CodecError::Record { index, reason: "bad record separators" });
    }
    let timestamp = UtcMillis::parse_iso(&line[..ISO_LEN])
        .map_err(|_| CodecError::Record { index, reason: "bad timestamp" })?;
    let cell = &line[ISO_LEN + 1..value_end];
    if !matches!(cell[0], b'+' | b'-') || cell[VALUE_WIDTH - VALUE_DECIMALS - 1] != b'.' {
        return Err(CodecError::Record { index, reason: "bad value" });
    }
    let value: f64 = core::str::from_utf8(cell)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(CodecError::Record { index, reason: "bad value" })?;
    Ok(ValueRecord { timestamp, value })
}

pub fn serialize_sensor_description(desc: &SensorDescription) -> Result<Vec<u8>, CodecError> {
    desc.validate()?;
    let mut s = String::new();
    s.push_str(SENSOR_MAGIC);
    // Writing into a String cannot fail.
    let _ = write!(
        s,
        "sensor_id={}\nvendor={}\nobserved_property={}\nunit={}\nsampling_frequency_hz={:?}\nvalid_range={:?}/{:?}\nlocation={:?},{:?}\n",
        desc.sensor_id,
        desc.vendor,
        desc.observed_property,
        desc.unit,
        desc.sampling_frequency_hz,
        desc.valid_range.min,
        desc.valid_range.max,
        desc.location.lat,
        desc.location.lon,
    );
    Ok(s.into_bytes())
}

fn parse_real(text: &str, offset: usize) -> Result<f64, CodecError> {
    text.parse().map_err(|_| CodecError::Envelope { offset, reason: "bad real" })
}

fn parse_pair(text: &str, sep: char, offset: usize) -> Result<(f64, f64), CodecError> {
    let (a, b) = text.split_once(sep).ok_or(CodecError::Envelope { offset, reason: "bad pair" })?;
    Ok((parse_real(a, offset)?, parse_real(b, offset + a.len() + 1)?))
}

pub fn deserialize_sensor_description(payload: &[u8]) -> Result<SensorDescription, CodecError> {
    let mut lines = Lines { bytes: payload, pos: 0 };
    lines.expect_literal(SENSOR_MAGIC)?;
    let (sensor_id, _) = lines.field("sensor_id")?;
    let (vendor, _) = lines.field("vendor")?;
    let (observed_property, _) = lines.field("observed_property")?;
    let (unit, _) = lines.field("unit")?;
    let (freq, off) = lines.field("sampling_frequency_hz")?;
    let sampling_frequency_hz = parse_real(freq, off)?;
    let (range, off) = lines.field("valid_range")?;
    let (min, max) = parse_pair(range, '/', off)?;
    let (loc, off) = lines.field("location")?;
    let (lat, lon) = parse_pair(loc, ',', off)?;
    if lines.pos != payload.len() {
        return Err(CodecError::Envelope { offset: lines.pos, reason: "trailing bytes" });
    }
    let desc = SensorDescription {
        sensor_id: sensor_id.to_string(),
        vendor: vendor.to_string(),
        observed_property: observed_property.to_string(),
        unit: unit.to_string(),
        sampling_frequency_hz,
        valid_range: Range { min, max },
        location: GeoPoint { lat, lon },
    };
    desc.validate()?;
    Ok(desc)
}
