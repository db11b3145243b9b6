use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::trace::{TraceEvent, TraceKind};
use crate::group_net::PeerId;
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    /// Satisfied over interested (peer, item) pairs; 1.0 when none exist.
    pub delivery_ratio: f64,
    pub interested_pairs: u64,
    pub satisfied_pairs: u64,
    /// Seconds from creation to first delivery, over satisfied pairs.
    pub mean_latency: f64,
    pub median_latency: f64,
    /// Device-to-device bytes sent over bytes that first reached an
    /// interested peer that way; 0 when nothing was delivered.
    pub overhead_ratio: f64,
    pub bytes_transmitted: u64,
    pub bytes_delivered: u64,
    /// Share of sensor-data bytes received from peers rather than WLAN.
    pub infrastructure_offload: f64,
    pub sensor_bytes_d2d: u64,
    pub sensor_bytes_wlan: u64,
    pub transfers: u64,
    pub items_created: u64,
    pub group_count: u64,
    /// Mean over groups of their largest size.
    pub mean_group_size: f64,
    /// Seconds; groups still alive at the end count up to the end.
    pub mean_group_lifetime: f64,
    pub uploads: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

struct Item {
    created: SimTime,
    sensor: bool,
    interested: BTreeSet<PeerId>,
}

struct GroupLife {
    formed: SimTime,
    ended: Option<SimTime>,
    size: u64,
    peak: u64,
}

/// Pure function of the trace, so exported traces replay to the same numbers.
pub fn compute_metrics(trace: &[TraceEvent]) -> Metrics {
    let mut items: BTreeMap<u64, Item> = BTreeMap::new();
    let mut satisfied: BTreeSet<(u64, PeerId)> = BTreeSet::new();
    let mut latencies: Vec<f64> = Vec::new();
    let mut groups: BTreeMap<u64, GroupLife> = BTreeMap::new();
    let mut m = Metrics::default();
    let mut end = SimTime(0);

    let mut deliver = |items: &BTreeMap<u64, Item>, id: u64, peer: PeerId, at: SimTime| -> bool {
        match items.get(&id) {
            Some(item) if item.interested.contains(&peer) && satisfied.insert((id, peer)) => {
                latencies.push(at.saturating_sub(item.created).as_secs_f64());
                true
            }
            _ => false,
        }
    };

    for e in trace {
        end = end.max(e.time);
        match e.kind {
            TraceKind::ContentCreated => {
                if let Some(id) = e.id {
                    m.items_created += 1;
                    let interested: BTreeSet<PeerId> = e.list.iter().copied().collect();
                    m.interested_pairs += interested.len() as u64;
                    items.insert(id, Item { created: e.time, sensor: e.label == "sensor_data", interested });
                }
            }
            TraceKind::Transfer => {
                let (Some(id), Some(to)) = (e.id, e.other) else { continue };
                let bytes = e.bytes.unwrap_or(0);
                m.transfers += 1;
                m.bytes_transmitted += bytes;
                if items.get(&id).is_some_and(|i| i.sensor) {
                    m.sensor_bytes_d2d += bytes;
                }
                if deliver(&items, id, to, e.time) {
                    m.bytes_delivered += bytes;
                }
            }
            TraceKind::SensorFetch => {
                let (Some(id), Some(peer)) = (e.id, e.peer) else { continue };
                m.sensor_bytes_wlan += e.bytes.unwrap_or(0);
                deliver(&items, id, peer, e.time);
            }
            TraceKind::GroupFormed => {
                if let Some(id) = e.id {
                    let size = 1 + e.list.len() as u64;
                    groups.insert(id, GroupLife { formed: e.time, ended: None, size, peak: size });
                }
            }
            TraceKind::GroupJoined => {
                if let Some(g) = e.id.and_then(|id| groups.get_mut(&id)) {
                    g.size += 1;
                    g.peak = g.peak.max(g.size);
                }
            }
            TraceKind::GroupLeft => {
                if let Some(g) = e.id.and_then(|id| groups.get_mut(&id)) {
                    g.size = g.size.saturating_sub(1);
                }
            }
            TraceKind::GroupDissolved => {
                if let Some(g) = e.id.and_then(|id| groups.get_mut(&id)) {
                    g.ended.get_or_insert(e.time);
                }
            }
            TraceKind::Upload => m.uploads += 1,
            TraceKind::ContentRejected
            | TraceKind::ContactBegin
            | TraceKind::ContactEnd
            | TraceKind::Consume
            | TraceKind::Evict
            | TraceKind::RunEnd => {}
        }
    }

    m.satisfied_pairs = satisfied.len() as u64;
    m.delivery_ratio = if m.interested_pairs == 0 { 1.0 } else { ratio(m.satisfied_pairs, m.interested_pairs) };
    m.mean_latency = mean(&latencies);
    latencies.sort_by(f64::total_cmp);
    m.median_latency = match latencies.len() {
        0 => 0.0,
        n if n % 2 == 1 => latencies[n / 2],
        n => 0.5 * (latencies[n / 2 - 1] + latencies[n / 2]),
    };
    m.overhead_ratio = ratio(m.bytes_transmitted, m.bytes_delivered);
    m.infrastructure_offload = ratio(m.sensor_bytes_d2d, m.sensor_bytes_d2d + m.sensor_bytes_wlan);
    m.group_count = groups.len() as u64;
    let peaks: Vec<f64> = groups.values().map(|g| g.peak as f64).collect();
    let lives: Vec<f64> = groups.values().map(|g| g.ended.unwrap_or(end).saturating_sub(g.formed).as_secs_f64()).collect();
    m.mean_group_size = mean(&peaks);
    m.mean_group_lifetime = mean(&lives);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn ev(t: u64, seq: u64, kind: TraceKind) -> TraceEvent {
        TraceEvent::new(SimTime(t), seq, kind)
    }

    fn created(t: u64, seq: u64, id: u64, author: u32, size: u64, interested: &[u32]) -> TraceEvent {
        let mut e = ev(t, seq, TraceKind::ContentCreated);
        e.peer = Some(PeerId(author));
        e.id = Some(id);
        e.bytes = Some(size);
        e.label = "post".to_string();
        e.list = interested.iter().map(|&p| PeerId(p)).collect();
        e
    }

    fn transfer(t: u64, seq: u64, id: u64, from: u32, to: u32, bytes: u64) -> TraceEvent {
        let mut e = ev(t, seq, TraceKind::Transfer);
        e.peer = Some(PeerId(from));
        e.other = Some(PeerId(to));
        e.id = Some(id);
        e.bytes = Some(bytes);
        e.value = Some(1.0);
        e
    }

    #[test]
    fn empty_trace() {
        let m = compute_metrics(&[]);
        assert_eq!(m.delivery_ratio, 1.0);
        assert_eq!(m.overhead_ratio, 0.0);
        assert_eq!(m.group_count, 0);
    }

    #[test]
    fn single_delivery() {
        let t = [created(0, 0, 1, 0, 1_000_000, &[1]), transfer(3000, 1, 1, 0, 1, 1_000_000), ev(5000, 2, TraceKind::RunEnd)];
        let m = compute_metrics(&t);
        assert_eq!(m.delivery_ratio, 1.0);
        assert_eq!(m.overhead_ratio, 1.0);
        assert_eq!(m.mean_latency, 3.0);
    }

    #[test]
    fn redundant_relay_doubles_overhead() {
        // 0 -> 1 (relay, not interested) -> 2 (interested).
        let t = [
            created(0, 0, 1, 0, 500, &[2]),
            transfer(1000, 1, 1, 0, 1, 500),
            transfer(2000, 2, 1, 1, 2, 500),
            ev(3000, 3, TraceKind::RunEnd),
        ];
        let m = compute_metrics(&t);
        assert_eq!(m.overhead_ratio, 2.0);
        assert_eq!(m.delivery_ratio, 1.0);
        assert_eq!(m.median_latency, 2.0);
    }

    #[test]
    fn three_event_fixture() {
        // Two interested peers, one reached after 4 s.
        let t = [created(1000, 0, 7, 0, 100, &[1, 2]), transfer(5000, 1, 7, 0, 1, 100), ev(9000, 2, TraceKind::RunEnd)];
        let m = compute_metrics(&t);
        assert_eq!((m.interested_pairs, m.satisfied_pairs), (2, 1));
        assert_eq!(m.delivery_ratio, 0.5);
        assert_eq!(m.mean_latency, 4.0);
        assert_eq!(m.overhead_ratio, 1.0);
    }

    #[test]
    fn group_statistics() {
        let mut f = ev(0, 0, TraceKind::GroupFormed);
        f.peer = Some(PeerId(0));
        f.id = Some(0);
        f.list = vec![PeerId(1)];
        let mut j = ev(1000, 1, TraceKind::GroupJoined);
        j.peer = Some(PeerId(2));
        j.id = Some(0);
        let mut d = ev(4000, 2, TraceKind::GroupDissolved);
        d.id = Some(0);
        let mut g = ev(6000, 3, TraceKind::GroupFormed);
        g.peer = Some(PeerId(3));
        g.id = Some(1);
        g.list = vec![PeerId(4)];
        let m = compute_metrics(&[f, j, d, g, ev(10_000, 4, TraceKind::RunEnd)]);
        assert_eq!(m.group_count, 2);
        assert_eq!(m.mean_group_size, 2.5);
        assert_eq!(m.mean_group_lifetime, 4.0);
    }
}
