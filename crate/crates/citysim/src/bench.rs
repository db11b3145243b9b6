//! Serialization and deserialization timings of the observation codec.

use std::time::Instant;

use citysim_core::rng::SplitMix64;
use citysim_core::sme::{deserialize_observation, estimate_payload_size, serialize_observation, ObservationSet, TimeWindow, ValueRecord};
use citysim_core::time::UtcMillis;

use crate::error::{Error, Result};

/// 2014-06-01T00:00:00Z
const START: UtcMillis = UtcMillis(1_401_580_800_000);

/// `n` records one millisecond apart with values of at most six decimals.
pub fn synthetic_observation(n: usize, rng: &mut SplitMix64) -> ObservationSet {
    let records = (0..n)
        .map(|i| ValueRecord {
            timestamp: UtcMillis(START.0 + i as i64),
            value: (rng.below(2_000_000_000) as f64 - 1e9) / 1000.0,
        })
        .collect();
    ObservationSet {
        sensor_id: "bench-sensor".into(),
        window: TimeWindow { start: START, end: UtcMillis(START.0 + n.max(1) as i64) },
        records,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    /// Seconds.
    pub mean: f64,
    pub median: f64,
    /// Half-width of the 95% interval of the mean, normal approximation.
    pub ci95: f64,
}

impl Timing {
    fn of(samples: &mut [f64]) -> Timing {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() < 2 { 0.0 } else { samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) };
        samples.sort_by(f64::total_cmp);
        let mid = samples.len() / 2;
        let median = if samples.len() % 2 == 1 { samples[mid] } else { 0.5 * (samples[mid - 1] + samples[mid]) };
        Timing { mean, median, ci95: 1.96 * (var / n).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub records: usize,
    pub bytes: usize,
    pub estimate: usize,
    pub serialize: Timing,
    pub deserialize: Timing,
}

pub const CSV_HEADER: &str = "records,bytes,serialize_mean_s,serialize_ci95_s,deserialize_mean_s,deserialize_ci95_s";

impl BenchRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            self.records, self.bytes, self.serialize.mean, self.serialize.ci95, self.deserialize.mean, self.deserialize.ci95
        )
    }
}

/// Times `reps` round trips at 0, step, 2·step, … up to `max_records`.
/// Each payload is decoded and compared with the input before timing
/// counts, and an untimed warm-up run precedes each size.
pub fn run_bench(max_records: usize, step: usize, reps: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if step == 0 || reps == 0 {
        return Err(Error::validation("step and reps must be positive"));
    }
    let mut rng = SplitMix64::new(seed);
    let mut cases = Vec::new();
    for n in (0..=max_records).step_by(step) {
        let obs = synthetic_observation(n, &mut rng);
        let payload = serialize_observation(&obs).map_err(Error::validation)?;
        let back = deserialize_observation(&payload).map_err(Error::validation)?;
        if back != obs {
            return Err(Error::Assertion(format!("{n} records did not round-trip")));
        }
        cases.push((obs, payload.len(), Vec::with_capacity(reps), Vec::with_capacity(reps)));
    }
    // Sizes take turns within each repetition so slow spells hit all of them.
    for _ in 0..reps {
        for (obs, _, ser, de) in &mut cases {
            let t = Instant::now();
            let p = serialize_observation(obs).map_err(Error::validation)?;
            ser.push(t.elapsed().as_secs_f64());
            let t = Instant::now();
            let o = deserialize_observation(&p).map_err(Error::validation)?;
            de.push(t.elapsed().as_secs_f64());
            std::hint::black_box(o);
        }
    }
    let rows = cases
        .into_iter()
        .map(|(obs, bytes, mut ser, mut de)| BenchRow {
            records: obs.records.len(),
            bytes,
            estimate: estimate_payload_size(obs.records.len()),
            serialize: Timing::of(&mut ser),
            deserialize: Timing::of(&mut de),
        })
        .collect();
    Ok(rows)
}

/// Ratio of median times at the largest and the smallest nonzero size,
/// over the ratio of their record counts. Linear scaling gives about 1.
pub fn scaling(rows: &[BenchRow], pick: impl Fn(&BenchRow) -> f64) -> Option<f64> {
    let nonzero: Vec<&BenchRow> = rows.iter().filter(|r| r.records > 0).collect();
    let (lo, hi) = (nonzero.first()?, nonzero.last()?);
    if lo.records == hi.records || pick(lo) <= 0.0 {
        return None;
    }
    Some((pick(hi) / pick(lo)) / (hi.records as f64 / lo.records as f64))
}

/// Size checks plus near-linear scaling (within 30%) of both directions.
pub fn check_rows(rows: &[BenchRow]) -> Result<()> {
    for r in rows {
        if r.bytes != r.estimate {
            return Err(Error::Assertion(format!("{} records: {} bytes, estimate {}", r.records, r.bytes, r.estimate)));
        }
    }
    for (name, s) in [("serialize", scaling(rows, |r| r.serialize.median)), ("deserialize", scaling(rows, |r| r.deserialize.median))] {
        if let Some(s) = s {
            if !(0.7..=1.3).contains(&s) {
                return Err(Error::Assertion(format!("{name} time scales {s:.2}x linear")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_bench_sizes_match_estimate() {
        let rows = run_bench(200, 100, 2, 1).unwrap();
        assert_eq!(rows.iter().map(|r| r.records).collect::<Vec<_>>(), [0, 100, 200]);
        assert!(rows.iter().all(|r| r.bytes == 1946 + 48 * r.records));
    }

    #[test]
    fn scaling_is_relative_to_linear() {
        let t = |s| Timing { mean: s, median: s, ci95: 0.0 };
        let row = |n, s| BenchRow { records: n, bytes: 0, estimate: 0, serialize: t(s), deserialize: t(s) };
        let rows = [row(0, 0.001), row(10, 1.0), row(50, 5.5)];
        assert!((scaling(&rows, |r| r.serialize.median).unwrap() - 1.1).abs() < 1e-12);
        assert_eq!(scaling(&rows[..1], |r| r.serialize.median), None);
    }
}
