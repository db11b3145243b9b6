use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::group_net::PeerId;
use crate::time::SimTime;

pub const TRACE_HEADER: &str = "time_ms,seq,event,peer,other,id,bytes,value,label,list";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TraceKind {
    /// peer = author, id = content, bytes = size, label = content kind,
    /// list = peers interested at creation.
    ContentCreated,
    /// The author's cache could not take the item.
    ContentRejected,
    /// peer < other; label = link kind.
    ContactBegin,
    ContactEnd,
    /// peer = owner, id = group, value = size, list = clients.
    GroupFormed,
    /// peer joined group id.
    GroupJoined,
    GroupLeft,
    /// id = group, list = released members.
    GroupDissolved,
    /// peer = sender, other = receiver, id, bytes, value = utility.
    Transfer,
    /// peer consumed id with utility value.
    Consume,
    Evict,
    /// peer fetched id over WLAN; bytes, label = mode.
    SensorFetch,
    /// peer uploaded id; value = receipt.
    Upload,
    RunEnd,
}

impl TraceKind {
    pub const ALL: [TraceKind; 14] = [
        TraceKind::ContentCreated,
        TraceKind::ContentRejected,
        TraceKind::ContactBegin,
        TraceKind::ContactEnd,
        TraceKind::GroupFormed,
        TraceKind::GroupJoined,
        TraceKind::GroupLeft,
        TraceKind::GroupDissolved,
        TraceKind::Transfer,
        TraceKind::Consume,
        TraceKind::Evict,
        TraceKind::SensorFetch,
        TraceKind::Upload,
        TraceKind::RunEnd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::ContentCreated => "content_created",
            TraceKind::ContentRejected => "content_rejected",
            TraceKind::ContactBegin => "contact_begin",
            TraceKind::ContactEnd => "contact_end",
            TraceKind::GroupFormed => "group_formed",
            TraceKind::GroupJoined => "group_joined",
            TraceKind::GroupLeft => "group_left",
            TraceKind::GroupDissolved => "group_dissolved",
            TraceKind::Transfer => "transfer",
            TraceKind::Consume => "consume",
            TraceKind::Evict => "evict",
            TraceKind::SensorFetch => "sensor_fetch",
            TraceKind::Upload => "upload",
            TraceKind::RunEnd => "run_end",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub time: SimTime,
    pub seq: u64,
    pub kind: TraceKind,
    pub peer: Option<PeerId>,
    pub other: Option<PeerId>,
    pub id: Option<u64>,
    pub bytes: Option<u64>,
    pub value: Option<f64>,
    pub label: String,
    pub list: Vec<PeerId>,
}

impl TraceEvent {
    pub fn new(time: SimTime, seq: u64, kind: TraceKind) -> Self {
        TraceEvent { time, seq, kind, peer: None, other: None, id: None, bytes: None, value: None, label: String::new(), list: Vec::new() }
    }

    /// One CSV line without the trailing newline. Values use the shortest
    /// representation that parses back to the same float.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let opt = |s: &mut String, v: Option<u64>| {
            if let Some(v) = v {
                let _ = write!(s, "{v}");
            }
        };
        let _ = write!(s, "{},{},{},", self.time.0, self.seq, self.kind.as_str());
        opt(&mut s, self.peer.map(|p| u64::from(p.0)));
        s.push(',');
        opt(&mut s, self.other.map(|p| u64::from(p.0)));
        s.push(',');
        opt(&mut s, self.id);
        s.push(',');
        opt(&mut s, self.bytes);
        s.push(',');
        if let Some(v) = self.value {
            let _ = write!(s, "{v:?}");
        }
        s.push(',');
        s.push_str(&self.label);
        s.push(',');
        for (i, p) in self.list.iter().enumerate() {
            if i > 0 {
                s.push('|');
            }
            let _ = write!(s, "{}", p.0);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("trace is missing its header")]
    MissingHeader,
    #[error("trace does not end with run_end (truncated?)")]
    Truncated,
    #[error("line {line}: events out of (time, seq) order")]
    Order { line: usize },
}

/// The whole trace as CSV text with a header line.
pub fn write_trace(events: &[TraceEvent]) -> String {
    let mut out = String::with_capacity(64 * (events.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for e in events {
        out.push_str(&e.to_csv());
        out.push('\n');
    }
    out
}

fn field<T: core::str::FromStr>(line: usize, name: &str, s: &str) -> Result<Option<T>, TraceError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| TraceError::Parse { line, reason: format!("bad {name} '{s}'") })
}

/// Parses a trace written by [`write_trace`]. The trace must be strictly
/// ordered by `(time, seq)` and end with `run_end`.
pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, TraceError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == TRACE_HEADER => {}
        _ => return Err(TraceError::MissingHeader),
    }
    let mut events: Vec<TraceEvent> = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split(',').collect();
        if cols.len() != 10 {
            return Err(TraceError::Parse { line, reason: format!("expected 10 fields, found {}", cols.len()) });
        }
        let req = |name: &str, s: &str| -> Result<u64, TraceError> {
            field(line, name, s)?.ok_or_else(|| TraceError::Parse { line, reason: format!("missing {name}") })
        };
        let kind = TraceKind::parse(cols[2]).ok_or_else(|| TraceError::Parse { line, reason: format!("unknown event '{}'", cols[2]) })?;
        let mut list = Vec::new();
        if !cols[9].is_empty() {
            for p in cols[9].split('|') {
                list.push(PeerId(req("list", p)? as u32));
            }
        }
        let peer_field = |name: &str, s: &str| -> Result<Option<PeerId>, TraceError> { Ok(field::<u32>(line, name, s)?.map(PeerId)) };
        let ev = TraceEvent {
            time: SimTime(req("time_ms", cols[0])?),
            seq: req("seq", cols[1])?,
            kind,
            peer: peer_field("peer", cols[3])?,
            other: peer_field("other", cols[4])?,
            id: field(line, "id", cols[5])?,
            bytes: field(line, "bytes", cols[6])?,
            value: field(line, "value", cols[7])?,
            label: cols[8].into(),
            list,
        };
        if let Some(prev) = events.last() {
            if (ev.time, ev.seq) <= (prev.time, prev.seq) {
                return Err(TraceError::Order { line });
            }
        }
        events.push(ev);
    }
    match events.last() {
        Some(e) if e.kind == TraceKind::RunEnd => Ok(events),
        _ => Err(TraceError::Truncated),
    }
}
