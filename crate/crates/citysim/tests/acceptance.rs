//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use citysim::bench::{run_bench, synthetic_observation};
use citysim::citysim_core::group_net::{
    calibrate, create_bridge, flow_throughputs, AnalyticParams, BridgeDecl, EmpiricalTable, Flow, FlowKind, FlowPattern, LinkOrigin,
    PeerId, ThroughputMode, ThroughputModelParams, Topology,
};
use citysim::citysim_core::mobility::Point;
use citysim::citysim_core::rng::{SplitMix64, Stream};
use citysim::citysim_core::sensor_service::{
    compute_air_quality_index, BreakpointTable, ColorBand, Mode, ServiceDescription, SensorService, Station,
};
use citysim::citysim_core::sim::{compute_metrics, parse_trace, Engine, EngineInputs, PeerConfig, ScenarioConfig, TraceKind};
use citysim::citysim_core::sme::{
    deserialize_observation, serialize_observation, GeoPoint, ObservationSet, Range, SensorDescription, TimeWindow, ValueRecord,
};
use citysim::citysim_core::time::{SimTime, UtcMillis};
use citysim::citysim_core::workload::{check_means, generate_workload, workload_stats, EventKind, Measure, WorkloadParams};
use citysim::formats::metrics_from_json;
use citysim::citysim_core::sensor_service::Role;

type Outcome = Result<String, String>;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1 ----------------------------------------------------------------------

/// Reported file sizes in bytes, binary units.
const REPORTED_SIZES: [(usize, f64); 6] = [
    (0, 1.9 * 1024.0),
    (10_000, 460.0 * 1024.0),
    (20_000, 917.0 * 1024.0),
    (30_000, 1.4 * 1024.0 * 1024.0),
    (40_000, 1.8 * 1024.0 * 1024.0),
    (50_000, 2.3 * 1024.0 * 1024.0),
];

fn codec_sizes() -> Outcome {
    let mut rng = SplitMix64::new(1);
    let mut worst: f64 = 0.0;
    for (n, reported) in REPORTED_SIZES {
        let bytes = serialize_observation(&synthetic_observation(n, &mut rng)).map_err(|e| e.to_string())?.len();
        ensure(bytes == 1946 + 48 * n, || format!("n={n}: {bytes} bytes, expected {}", 1946 + 48 * n))?;
        let rel = (bytes as f64 / reported - 1.0).abs();
        worst = worst.max(rel);
        ensure(rel <= 0.10, || format!("n={n}: {bytes} bytes is {:.1}% from the reported size", rel * 100.0))?;
    }
    Ok(format!("sizes exact; largest deviation from reported sizes {:.1}%", worst * 100.0))
}

// 2 ----------------------------------------------------------------------

fn random_observation(rng: &mut SplitMix64) -> ObservationSet {
    let n = rng.below(50_001) as usize;
    let start = UtcMillis(1_300_000_000_000 + rng.below(400_000_000_000) as i64);
    let mut t = start.0 + rng.below(1000) as i64;
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        // Integers scaled by 1e-6 with random magnitude, below 1e13.
        let raw = (rng.next_u64() >> rng.below(64)) as i64;
        let raw = if rng.bernoulli(0.5) { -raw } else { raw };
        records.push(ValueRecord { timestamp: UtcMillis(t), value: raw as f64 / 1e6 });
        t += rng.below(2000) as i64;
    }
    let end = UtcMillis(t + rng.below(1000) as i64);
    ObservationSet { sensor_id: format!("sensor-{}", rng.below(1000)), window: TimeWindow { start, end }, records }
}

fn codec_round_trip() -> Outcome {
    const SETS: u64 = 1000;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8) as u64;
    let failures: Vec<String> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                s.spawn(move || {
                    let mut bad = Vec::new();
                    for i in (w..SETS).step_by(threads as usize) {
                        let mut rng = SplitMix64::derive_raw(i, 0xC0DEC);
                        let obs = random_observation(&mut rng);
                        let result = serialize_observation(&obs).and_then(|p| deserialize_observation(&p));
                        match result {
                            Ok(back) if back == obs => {}
                            Ok(_) => bad.push(format!("set {i} changed in round trip")),
                            Err(e) => bad.push(format!("set {i}: {e}")),
                        }
                    }
                    bad
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker")).collect()
    });
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("{SETS} random sets of 0-50000 records round-trip"))
}

// 3 ----------------------------------------------------------------------

fn codec_scaling() -> Outcome {
    let rows = run_bench(50_000, 10_000, 12, 7).map_err(|e| e.to_string())?;
    let at = |n: usize| rows.iter().find(|r| r.records == n).expect("row");
    let (lo, hi) = (at(10_000), at(50_000));
    let ser = hi.serialize.median / lo.serialize.median;
    let de = hi.deserialize.median / lo.deserialize.median;
    let ok = (3.5..=6.5).contains(&ser) && (3.5..=6.5).contains(&de);
    let msg = format!("time(50000)/time(10000): serialize {ser:.2}, deserialize {de:.2} (medians of 12 reps)");
    ensure(ok, || msg.clone())?;
    Ok(msg)
}

// 4 ----------------------------------------------------------------------

/// Builds one group of `size` with owner 0 and clients 1.., and returns
/// the rates of `flows` (src, dst) under `params`.
fn group_rates(size: u32, flows: &[(u32, u32)], params: &ThroughputModelParams) -> Result<Vec<f64>, String> {
    let mut topo = Topology::new();
    let clients: BTreeSet<PeerId> = (1..size).map(PeerId).collect();
    let gid = topo.form_group(PeerId(0), clients, 4).map_err(|e| e.to_string())?;
    let group = topo.group(gid).expect("formed");
    let flows = flows
        .iter()
        .map(|&(s, d)| Flow { src: PeerId(s), dst: PeerId(d), kind: if s == 0 || d == 0 { FlowKind::G2c } else { FlowKind::C2c } })
        .collect();
    Ok(flow_throughputs(&[group], &[], &FlowPattern { flows }, params).map_err(|e| e.to_string())?.rates)
}

/// (group size, flows, measured Mbps).
fn measured_cells() -> Vec<(u32, Vec<(u32, u32)>, Vec<f64>)> {
    vec![
        (2, vec![(0, 1)], vec![54.4]),
        (3, vec![(0, 1)], vec![52.6]),
        (3, vec![(1, 2)], vec![22.3]),
        (3, vec![(0, 1), (1, 2)], vec![44.3, 4.24]),
        (4, vec![(0, 1)], vec![52.75]),
        (4, vec![(1, 2)], vec![17.0]),
        (4, vec![(0, 1), (2, 3)], vec![40.0, 5.41]),
        (4, vec![(1, 3), (2, 3)], vec![12.7, 9.07]),
        (4, vec![(0, 3), (1, 3), (2, 3)], vec![37.4, 2.9, 3.22]),
    ]
}

fn empirical_fidelity() -> Outcome {
    let shipped = citysim::formats::load_empirical_table(&repo().join("calibration/empirical_table.toml")).map_err(|e| e.to_string())?;
    ensure(shipped == EmpiricalTable::measured_default(), || "shipped table differs from the built-in one".into())?;
    let params = ThroughputModelParams::default();
    ensure(params.mode == ThroughputMode::Empirical, || "default mode is not empirical".into())?;
    let mut cells = 0;
    for (size, flows, want) in measured_cells() {
        let got = group_rates(size, &flows, &params)?;
        ensure(got == want, || format!("size {size} {flows:?}: got {got:?}, want {want:?}"))?;
        cells += want.len();
    }
    let mut topo = Topology::new();
    topo.form_group(PeerId(0), [PeerId(1)].into(), 4).map_err(|e| e.to_string())?;
    let g2 = topo.form_group(PeerId(2), [PeerId(3)].into(), 4).map_err(|e| e.to_string())?;
    let link = create_bridge(&BridgeDecl { bridge: PeerId(1), remote_owner: PeerId(2) }, LinkOrigin::Declared, &topo).map_err(|e| e.to_string())?;
    let groups: Vec<_> = topo.groups().collect();
    let pattern = FlowPattern {
        flows: vec![
            Flow { src: PeerId(1), dst: PeerId(2), kind: FlowKind::Bridge },
            Flow { src: PeerId(2), dst: PeerId(3), kind: FlowKind::G2c },
        ],
    };
    let r = flow_throughputs(&groups, &[link], &pattern, &params).map_err(|e| e.to_string())?;
    ensure(r.rates[0] == 6.8, || format!("bridge flow got {} Mbps", r.rates[0]))?;
    ensure(topo.group(g2).is_some_and(|g| g.size() == 2) && r.rates[1] == 54.4, || format!("remote group flow got {}", r.rates[1]))?;
    Ok(format!("{cells} measured cells reproduced exactly; bridge flow 6.8 Mbps"))
}

// 5 ----------------------------------------------------------------------

fn hops(owner_involved: bool) -> f64 {
    if owner_involved {
        1.0
    } else {
        2.0
    }
}

fn analytic_calibration() -> Outcome {
    let report = calibrate(&EmpiricalTable::measured_default()).map_err(|e| e.to_string())?;
    let worst = report.worst_concurrent_error();
    ensure(worst <= 0.25, || format!("worst concurrent-cell error {worst:.3}"))?;

    // Conservation on the fitted cells.
    let mut entries: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for c in &report.cells {
        let e = entries.entry(c.entry).or_insert((c.group_size, 0.0));
        e.1 += f64::from(c.kind.hop_count()) * c.fitted;
    }
    let mut worst_cons: f64 = 0.0;
    for (size, total) in entries.values() {
        worst_cons = worst_cons.max((total / report.params.capacity_for(*size) - 1.0).abs());
    }

    // Conservation on random patterns under fitted and uniform parameters.
    let mut rng = SplitMix64::new(55);
    let param_sets = [report.params.clone(), AnalyticParams::uniform(54.4)];
    for p in &param_sets {
        let params = ThroughputModelParams { mode: ThroughputMode::Analytic, analytic: p.clone(), ..Default::default() };
        for _ in 0..2000 {
            let size = 2 + rng.below(3) as u32;
            let n = 1 + rng.below(4) as usize;
            let flows: Vec<(u32, u32)> = (0..n)
                .map(|_| {
                    let s = rng.below(u64::from(size)) as u32;
                    let d = (s + 1 + rng.below(u64::from(size) - 1) as u32) % size;
                    (s, d)
                })
                .collect();
            let rates = group_rates(size, &flows, &params)?;
            let total: f64 = flows.iter().zip(&rates).map(|(&(s, d), t)| hops(s == 0 || d == 0) * t).sum();
            worst_cons = worst_cons.max((total / p.capacity_for(size as usize) - 1.0).abs());
        }
    }
    ensure(worst_cons <= 1e-9, || format!("conservation off by {worst_cons:e}"))?;
    Ok(format!("worst concurrent-cell error {:.1}%; conservation within {worst_cons:.1e}", worst * 100.0))
}

// 6 ----------------------------------------------------------------------

fn halving() -> Outcome {
    let fitted = calibrate(&EmpiricalTable::measured_default()).map_err(|e| e.to_string())?.params;
    for p in [fitted, AnalyticParams::uniform(54.4), AnalyticParams::uniform(13.0)] {
        let params = ThroughputModelParams { mode: ThroughputMode::Analytic, analytic: p, ..Default::default() };
        for size in [3, 4] {
            let g = group_rates(size, &[(0, 1)], &params)?[0];
            let c = group_rates(size, &[(1, 2)], &params)?[0];
            ensure(2.0 * c == g, || format!("size {size}: c2c {c} vs g2c {g}"))?;
        }
    }
    Ok("single c2c is exactly half of single g2c at sizes 3 and 4".into())
}

// 7 ----------------------------------------------------------------------

fn clique_config(k: u32, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig { seed, duration: 320.0, ..Default::default() };
    let mut rng = SplitMix64::derive_raw(seed, 0x7C11);
    cfg.peers = (0..k)
        .map(|i| PeerConfig {
            position: Some(Point { x: 500.0 + rng.uniform(0.0, 28.0), y: 500.0 + rng.uniform(0.0, 28.0) }),
            ..PeerConfig::new(i)
        })
        .collect();
    cfg.profiles.interests = cfg.profiles.vocabulary.iter().map(|t| (t.clone(), 1.0)).collect();
    cfg.network.unbounded = true;
    cfg.dissemination.buffer_capacity = 1 << 40;
    cfg.workload = Some(WorkloadParams {
        n_users: k,
        session_length: 300.0,
        tags_created_per_user: Measure::new(0.0, 0.0, 0, 0),
        ..Default::default()
    });
    cfg
}

/// Flooding over the static contact graph: each tick, every holder hands
/// every item it held before the tick to every neighbour whose pairing
/// time has elapsed.
fn flooding_oracle(cfg: &ScenarioConfig, created: &[(u64, PeerId, SimTime)]) -> BTreeMap<(u64, PeerId), SimTime> {
    let pos: BTreeMap<PeerId, Point> = cfg.peers.iter().map(|p| (p.id, p.position.expect("static"))).collect();
    let r2 = cfg.mobility.range * cfg.mobility.range;
    let near = |a: &Point, b: &Point| (a.x - b.x).powi(2) + (a.y - b.y).powi(2) <= r2;
    let tick = cfg.tick_ms();
    let warmup = (cfg.network.pairing_setup / cfg.tick).floor() as u64 * tick;
    let end = SimTime::from_secs_f64(cfg.duration).0;
    let mut delivered = BTreeMap::new();
    for &(id, author, at) in created {
        let mut holders: BTreeSet<PeerId> = [author].into();
        let mut t = at.0.div_ceil(tick) * tick;
        while t < end && holders.len() < pos.len() {
            if t >= warmup {
                let before = holders.clone();
                for h in &before {
                    for (p, xy) in &pos {
                        if !before.contains(p) && near(&pos[h], xy) && holders.insert(*p) {
                            delivered.insert((id, *p), SimTime(t));
                        }
                    }
                }
            }
            t += tick;
        }
    }
    delivered
}

fn epidemic_oracle() -> Outcome {
    let mut runs = 0;
    let mut pairs = 0;
    for k in 2..=4u32 {
        for seed in 0..100u64 {
            let cfg = clique_config(k, seed);
            let mut engine = Engine::new(cfg.clone(), EngineInputs::default()).map_err(|e| e.to_string())?;
            engine.run_to_end().map_err(|e| e.to_string())?;
            let out = engine.finish().map_err(|e| e.to_string())?;
            let created: Vec<(u64, PeerId, SimTime)> = out
                .trace
                .iter()
                .filter(|e| e.kind == TraceKind::ContentCreated)
                .map(|e| (e.id.expect("id"), e.peer.expect("author"), e.time))
                .collect();
            let mut sim: BTreeMap<(u64, PeerId), SimTime> = BTreeMap::new();
            for e in out.trace.iter().filter(|e| e.kind == TraceKind::Transfer) {
                sim.entry((e.id.expect("id"), e.other.expect("receiver"))).or_insert(e.time);
            }
            let oracle = flooding_oracle(&cfg, &created);
            ensure(sim == oracle, || format!("k={k} seed={seed}: simulator {} deliveries, oracle {}", sim.len(), oracle.len()))?;
            ensure(out.metrics.delivery_ratio == 1.0, || format!("k={k} seed={seed}: delivery ratio {}", out.metrics.delivery_ratio))?;
            runs += 1;
            pairs += oracle.len();
        }
    }
    Ok(format!("{runs} clique runs match the flooding oracle ({pairs} deliveries, same ticks); delivery ratio 1.0"))
}

// 8 ----------------------------------------------------------------------

fn mobile_config(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig { seed, duration: 3600.0, population: 20, ..Default::default() };
    cfg.mobility.area = (300.0, 300.0);
    cfg.profiles.random = true;
    cfg.dissemination.buffer_capacity = 6_000_000;
    cfg.workload = Some(WorkloadParams { session_length: 3600.0, ..Default::default() });
    cfg
}

fn duplicate_suppression() -> Outcome {
    let mut transfers = 0u64;
    let mut evictions = 0u64;
    let mut actions = 0u64;
    for seed in 0..50u64 {
        let cfg = mobile_config(seed);
        let capacity = cfg.dissemination.buffer_capacity;
        let mut engine = Engine::new(cfg, EngineInputs::default()).map_err(|e| e.to_string())?;
        engine.check_invariants().map_err(|e| format!("seed {seed}: {e}"))?;
        while engine.advance().map_err(|e| e.to_string())? {
            engine.check_invariants().map_err(|e| format!("seed {seed}: {e}"))?;
            actions += 1;
        }
        // Replay holdings and bytes from the trace, checking every event.
        let trace = engine.trace();
        let mut size: BTreeMap<u64, u64> = BTreeMap::new();
        let mut held: BTreeMap<PeerId, BTreeSet<u64>> = BTreeMap::new();
        let mut used: BTreeMap<PeerId, u64> = BTreeMap::new();
        for (i, e) in trace.iter().enumerate() {
            match e.kind {
                TraceKind::ContentCreated => {
                    let (id, p, b) = (e.id.expect("id"), e.peer.expect("peer"), e.bytes.expect("bytes"));
                    size.insert(id, b);
                    held.entry(p).or_default().insert(id);
                    *used.entry(p).or_default() += b;
                }
                TraceKind::Transfer => {
                    let (id, p) = (e.id.expect("id"), e.other.expect("receiver"));
                    ensure(held.entry(p).or_default().insert(id), || format!("seed {seed} event {i}: item {id} sent to holder {p}"))?;
                    *used.entry(p).or_default() += size[&id];
                    transfers += 1;
                }
                TraceKind::Evict => {
                    let (id, p) = (e.id.expect("id"), e.peer.expect("peer"));
                    ensure(held.entry(p).or_default().remove(&id), || format!("seed {seed} event {i}: evicted unheld item {id}"))?;
                    *used.entry(p).or_default() -= size[&id];
                    evictions += 1;
                }
                _ => {}
            }
            if let Some(p) = e.peer.into_iter().chain(e.other).find(|p| used.get(p).is_some_and(|u| *u > capacity)) {
                return Err(format!("seed {seed} event {i}: peer {p} holds {} bytes", used[&p]));
            }
        }
        for p in engine.peers() {
            let replayed = held.get(&p.peer()).cloned().unwrap_or_default();
            let actual: BTreeSet<u64> = p.cache.items().map(|it| it.id.0).collect();
            ensure(replayed == actual, || format!("seed {seed}: trace holdings of {} disagree with its cache", p.peer()))?;
        }
    }
    ensure(evictions > 0, || "no scenario exercised eviction".into())?;
    Ok(format!("50 runs, {actions} actions checked, {transfers} transfers, {evictions} evictions, no duplicate deliveries"))
}

// 9 ----------------------------------------------------------------------

fn workload_calibration() -> Outcome {
    let big = WorkloadParams { n_users: 500, ..Default::default() };
    let w = generate_workload(&big, &mut SplitMix64::derive(1, Stream::Workload)).map_err(|e| e.to_string())?;
    let checks = check_means(&big, &workload_stats(&w));
    for (name, target, s, ok) in &checks {
        ensure(*ok, || format!("{name}: mean {:.3} vs {target} (se {:.3})", s.mean, s.standard_error()))?;
    }
    // 39 ± 2·√22·2.18
    let sd_total = 22f64.sqrt() * 2.18;
    let (lo, hi) = (39.0 - 2.0 * sd_total, 39.0 + 2.0 * sd_total);
    let small = WorkloadParams::default();
    let mut inside = 0;
    for seed in 0..100u64 {
        let w = generate_workload(&small, &mut SplitMix64::derive(seed, Stream::Workload)).map_err(|e| e.to_string())?;
        let posts = w.events.iter().filter(|e| e.kind == EventKind::Post).count() as f64;
        if (lo..=hi).contains(&posts) {
            inside += 1;
        }
    }
    let msg = format!("n=500 means within 3 SE; 22-user totals in [{lo:.2}, {hi:.2}] for {inside}/100 seeds");
    ensure(inside >= 95, || msg.clone())?;
    Ok(msg)
}

// 10 ---------------------------------------------------------------------

fn determinism() -> Outcome {
    let tmp = std::env::temp_dir().join(format!("citysim-acceptance-{}", std::process::id()));
    let scenario = repo().join("scenarios/campus.toml");
    let mut sink = Vec::new();
    let (a, b) = (tmp.join("a"), tmp.join("b"));
    citysim::cli::run_scenario(&scenario, &a, &[], &mut sink).map_err(|e| e.to_string())?;
    citysim::cli::run_scenario(&scenario, &b, &[], &mut sink).map_err(|e| e.to_string())?;
    let read = |p: PathBuf| std::fs::read(&p).map_err(|e| format!("{}: {e}", p.display()));
    for f in ["trace.csv", "metrics.json"] {
        ensure(read(a.join(f))? == read(b.join(f))?, || format!("{f} differs between runs"))?;
    }
    let text = String::from_utf8(read(a.join("trace.csv"))?).map_err(|e| e.to_string())?;
    let replayed = compute_metrics(&parse_trace(&text).map_err(|e| e.to_string())?);
    let recorded = metrics_from_json(&a.join("metrics.json")).map_err(|e| e.to_string())?;
    ensure(replayed == recorded, || "replayed metrics differ".into())?;
    let _ = std::fs::remove_dir_all(&tmp);
    Ok(format!("campus scenario: identical outputs, replay exact ({} trace lines)", text.lines().count()))
}

// 11 ---------------------------------------------------------------------

fn aqi_properties() -> Outcome {
    let table = BreakpointTable::default();
    let props: Vec<String> = table.properties.keys().cloned().collect();
    let top = |p: &str| table.properties[p].last().expect("rows").0;
    let mut rng = SplitMix64::new(11);
    for case in 0..10_000 {
        let mut readings: BTreeMap<String, f64> = BTreeMap::new();
        for p in &props {
            if rng.bernoulli(0.8) {
                readings.insert(p.clone(), rng.uniform(0.0, 1.3 * top(p)));
            }
        }
        let p = &props[rng.below(props.len() as u64) as usize];
        let before = readings.get(p).copied().unwrap_or(0.0);
        readings.entry(p.clone()).or_insert(0.0);
        let base = compute_air_quality_index(&readings, &table).map_err(|e| e.to_string())?;
        readings.insert(p.clone(), before + rng.uniform(0.0, top(p)));
        let raised = compute_air_quality_index(&readings, &table).map_err(|e| e.to_string())?;
        ensure(raised >= base, || format!("case {case}: raising {p} lowered the index {base} -> {raised}"))?;
        ensure((0.0..=100.0).contains(&raised), || format!("case {case}: index {raised} out of range"))?;
    }
    let zero: BTreeMap<String, f64> = props.iter().map(|p| (p.clone(), 0.0)).collect();
    let z = compute_air_quality_index(&zero, &table).map_err(|e| e.to_string())?;
    ensure(z == 0.0 && ColorBand::of(z) == ColorBand::Green, || format!("all-zero readings gave {z}"))?;
    for p in &props {
        let v = compute_air_quality_index(&[(p.clone(), top(p))].into(), &table).map_err(|e| e.to_string())?;
        ensure(v == 100.0 && ColorBand::of(v) == ColorBand::Red, || format!("{p} at its top breakpoint gave {v}"))?;
    }

    let sensor = |id: &str, prop: &str| SensorDescription {
        sensor_id: id.into(),
        vendor: String::new(),
        observed_property: prop.into(),
        unit: "ug/m3".into(),
        sampling_frequency_hz: 1.0,
        valid_range: Range { min: 0.0, max: 1000.0 },
        location: GeoPoint { lat: 0.0, lon: 0.0 },
    };
    let desc = ServiceDescription {
        service_id: "s".into(),
        stations: vec![Station {
            station_id: "st".into(),
            location: GeoPoint { lat: 0.0, lon: 0.0 },
            sensors: vec![sensor("a", "PM10"), sensor("b", "NO2")],
        }],
    };
    let svc = SensorService::new(desc, table.clone()).map_err(|e| e.to_string())?;
    let mut rejected = 0;
    for _ in 0..1000 {
        let start = UtcMillis(rng.below(1 << 40) as i64);
        let window = TimeWindow { start, end: UtcMillis(start.0 + rng.below(1 << 30) as i64) };
        let ids: &[&str] = match rng.below(3) {
            0 => &["a"],
            1 => &["b", "a"],
            _ => &["a", "b"],
        };
        if svc.get_observations(ids, window, Mode::Raw, Role::Citizen).is_err() {
            rejected += 1;
        }
    }
    ensure(rejected == 1000, || format!("{} citizen raw requests accepted", 1000 - rejected))?;
    Ok("10000 monotonicity cases; 0 -> 0/green; top -> 100/red; 1000/1000 citizen raw requests rejected".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("codec size fidelity", codec_sizes),
        ("codec round-trip", codec_round_trip),
        ("codec time scaling", codec_scaling),
        ("empirical throughput fidelity", empirical_fidelity),
        ("analytic model calibration", analytic_calibration),
        ("halving property", halving),
        ("epidemic completeness oracle", epidemic_oracle),
        ("duplicate suppression", duplicate_suppression),
        ("workload calibration", workload_calibration),
        ("determinism", determinism),
        ("AQI properties", aqi_properties),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = check();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} [{secs:.1}s]: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{secs:.1}s]: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
