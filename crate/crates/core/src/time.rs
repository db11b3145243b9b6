//! Instants used across the crate.
//!
//! Two clocks exist: [`UtcMillis`] for wall-clock instants carried by sensor
//! payloads, and [`SimTime`] for simulated time inside the engine. Both are
//! integer milliseconds so that every rendered value is exact.

use core::fmt;
use core::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, Timelike};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Length of a rendered [`UtcMillis`]: `YYYY-MM-DDTHH:MM:SS.mmmZ`.
pub const ISO_LEN: usize = 24;

/// A UTC instant with millisecond precision.
///
/// Only years 0000..=9999 can be rendered in the fixed-width form; values
/// outside that range are rejected by [`UtcMillis::to_iso`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct UtcMillis(pub i64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TimeError {
    #[error("instant {0} ms is outside the renderable year range 0000-9999")]
    OutOfRange(i64),
    #[error("malformed timestamp at byte {0}")]
    Malformed(usize),
}

impl UtcMillis {
    pub const fn from_millis(ms: i64) -> Self {
        UtcMillis(ms)
    }

    pub const fn millis(self) -> i64 {
        self.0
    }

    pub fn checked_add_millis(self, ms: i64) -> Option<Self> {
        self.0.checked_add(ms).map(UtcMillis)
    }

    /// Writes the 24-byte ISO-8601 form into `out`.
    pub fn write_iso(self, out: &mut [u8; ISO_LEN]) -> Result<(), TimeError> {
        let dt = DateTime::from_timestamp_millis(self.0).ok_or(TimeError::OutOfRange(self.0))?;
        let year = dt.year();
        if !(0..=9999).contains(&year) {
            return Err(TimeError::OutOfRange(self.0));
        }
        let ms = (self.0.rem_euclid(1000)) as u32;
        put_digits(&mut out[0..4], year as u32);
        out[4] = b'-';
        put_digits(&mut out[5..7], dt.month());
        out[7] = b'-';
        put_digits(&mut out[8..10], dt.day());
        out[10] = b'T';
        put_digits(&mut out[11..13], dt.hour());
        out[13] = b':';
        put_digits(&mut out[14..16], dt.minute());
        out[16] = b':';
        put_digits(&mut out[17..19], dt.second());
        out[19] = b'.';
        put_digits(&mut out[20..23], ms);
        out[23] = b'Z';
        Ok(())
    }

    pub fn to_iso(self) -> Result<alloc::string::String, TimeError> {
        let mut buf = [0u8; ISO_LEN];
        self.write_iso(&mut buf)?;
        // Only ASCII digits and separators are written.
        Ok(alloc::string::String::from_utf8(buf.to_vec()).expect("ascii"))
    }

    /// Parses exactly the 24-byte form written by [`UtcMillis::write_iso`].
    pub fn parse_iso(bytes: &[u8]) -> Result<Self, TimeError> {
        if bytes.len() != ISO_LEN {
            return Err(TimeError::Malformed(bytes.len().min(ISO_LEN)));
        }
        for (i, sep) in [(4, b'-'), (7, b'-'), (10, b'T'), (13, b':'), (16, b':'), (19, b'.'), (23, b'Z')] {
            if bytes[i] != sep {
                return Err(TimeError::Malformed(i));
            }
        }
        let year = get_digits(bytes, 0, 4)?;
        let month = get_digits(bytes, 5, 2)?;
        let day = get_digits(bytes, 8, 2)?;
        let hour = get_digits(bytes, 11, 2)?;
        let minute = get_digits(bytes, 14, 2)?;
        let second = get_digits(bytes, 17, 2)?;
        let ms = get_digits(bytes, 20, 3)?;
        let date = NaiveDate::from_ymd_opt(year as i32, month, day).ok_or(TimeError::Malformed(5))?;
        let dt = date.and_hms_milli_opt(hour, minute, second, ms).ok_or(TimeError::Malformed(11))?;
        Ok(UtcMillis(dt.and_utc().timestamp_millis()))
    }
}

fn put_digits(out: &mut [u8], mut v: u32) {
    for slot in out.iter_mut().rev() {
        *slot = b'0' + (v % 10) as u8;
        v /= 10;
    }
}

fn get_digits(bytes: &[u8], start: usize, len: usize) -> Result<u32, TimeError> {
    let mut v = 0u32;
    for (i, b) in bytes[start..start + len].iter().enumerate() {
        if !b.is_ascii_digit() {
            return Err(TimeError::Malformed(start + i));
        }
        v = v * 10 + u32::from(b - b'0');
    }
    Ok(v)
}

impl fmt::Display for UtcMillis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut buf = [0u8; ISO_LEN];
        match self.write_iso(&mut buf) {
            Ok(()) => f.write_str(core::str::from_utf8(&buf).map_err(|_| fmt::Error)?),
            Err(_) => write!(f, "@{}ms", self.0),
        }
    }
}

impl FromStr for UtcMillis {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UtcMillis::parse_iso(s.as_bytes())
    }
}

impl Serialize for UtcMillis {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let s = self.to_iso().map_err(serde::ser::Error::custom)?;
        serializer.serialize_str(&s)
    }
}

impl<'de> Deserialize<'de> for UtcMillis {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = alloc::string::String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Simulated time in milliseconds since scenario start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms)
    }

    /// Rounds to the nearest millisecond; negative or non-finite input maps to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !(s.is_finite() && s > 0.0) {
            return SimTime::ZERO;
        }
        SimTime(libm::round(s * 1000.0) as u64)
    }

    pub const fn millis(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl core::ops::Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}s", self.0 / 1000, self.0 % 1000)
    }
}
