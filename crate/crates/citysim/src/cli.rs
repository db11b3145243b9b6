//! Command-line interface. [`main`] parses arguments, runs one command and
//! returns the process exit status: 0 on success, 1 for invalid input, 2
//! when a checked property fails, 3 for I/O errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use citysim_core::group_net::calibrate;
use citysim_core::rng::{SplitMix64, Stream};
use citysim_core::sim::{compute_metrics, parse_trace, write_trace, Engine, SimError};
use citysim_core::workload::{check_means, generate_workload, workload_stats, Measure, Summary, WorkloadStats};

use crate::bench::{check_rows, run_bench, CSV_HEADER};
use crate::config::load_scenario;
use crate::error::{Error, Result};
use crate::formats::{
    load_empirical_table, load_workload_params, metrics_from_json, metrics_to_json, read_text, to_toml, write_atomic,
};
use crate::store::persist_uploads;

#[derive(Debug, Parser)]
#[command(name = "citysim", version, about = "Smart-city content sharing simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write metrics.json, trace.csv and resolved.toml.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override a config key, e.g. `--set seed=7`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Fit the analytic throughput model to a measured table.
    Calibrate {
        table: PathBuf,
        /// Where to write the fitted parameters.
        #[arg(long)]
        out: PathBuf,
        /// Largest accepted relative error on concurrent cells.
        #[arg(long, default_value_t = 0.25)]
        bound: f64,
    },
    /// Time observation encoding and decoding at increasing sizes.
    BenchCodec {
        #[arg(long, default_value_t = 50_000)]
        max_records: usize,
        #[arg(long, default_value_t = 10_000)]
        step: usize,
        #[arg(long, default_value_t = 10)]
        reps: usize,
    },
    /// Compare generated workloads with their configured statistics.
    WorkloadCheck {
        params: PathBuf,
        /// Overrides the user count of the parameter file.
        #[arg(long)]
        n_users: Option<u32>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
    },
    /// Recompute metrics from an exported trace.
    Replay {
        trace: PathBuf,
        /// Fail unless the recomputed metrics equal this file.
        #[arg(long)]
        expect: Option<PathBuf>,
    },
}

fn sim_error(e: SimError) -> Error {
    match e {
        SimError::Invariant { .. } => Error::Assertion(e.to_string()),
        _ => Error::Validation(e.to_string()),
    }
}

fn io_out(e: std::io::Error) -> Error {
    Error::io(Path::new("<stdout>"), e)
}

pub fn run_scenario(config: &Path, out_dir: &Path, overrides: &[String], out: &mut dyn Write) -> Result<()> {
    let loaded = load_scenario(config, overrides)?;
    let mut engine = Engine::new(loaded.config, loaded.inputs).map_err(sim_error)?;
    engine.run_to_end().map_err(sim_error)?;
    let uploads = engine.service().uploads().to_vec();
    let output = engine.finish().map_err(sim_error)?;

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_atomic(&out_dir.join("trace.csv"), write_trace(&output.trace).as_bytes())?;
    write_atomic(&out_dir.join("metrics.json"), metrics_to_json(&output.metrics).as_bytes())?;
    write_atomic(&out_dir.join("resolved.toml"), to_toml(&loaded.resolved)?.as_bytes())?;
    persist_uploads(&out_dir.join("uploads"), &uploads)?;

    let m = &output.metrics;
    writeln!(
        out,
        "items {} transfers {} delivery_ratio {:.4} overhead_ratio {:.4} offload {:.4}",
        m.items_created, m.transfers, m.delivery_ratio, m.overhead_ratio, m.infrastructure_offload
    )
    .map_err(io_out)?;
    writeln!(out, "wrote {}", out_dir.display()).map_err(io_out)
}

fn run_calibrate(table: &Path, out_path: &Path, bound: f64, out: &mut dyn Write) -> Result<()> {
    if !(bound.is_finite() && bound >= 0.0) {
        return Err(Error::validation("bound must be a nonnegative number"));
    }
    let t = load_empirical_table(table)?;
    let report = calibrate(&t).map_err(|e| Error::Validation(format!("{}: {e}", table.display())))?;
    write_atomic(out_path, to_toml(&report.params)?.as_bytes())?;
    writeln!(out, "group_size,entry,flow,kind,observed,fitted,relative_error,concurrent").map_err(io_out)?;
    for c in &report.cells {
        writeln!(
            out,
            "{},{},{},{},{},{:.4},{:+.4},{}",
            c.group_size,
            c.entry,
            c.flow,
            c.kind.as_str(),
            c.observed,
            c.fitted,
            c.relative_error,
            c.concurrent
        )
        .map_err(io_out)?;
    }
    let worst = report.worst_concurrent_error();
    writeln!(out, "worst concurrent relative error {worst:.4} (bound {bound})").map_err(io_out)?;
    if worst > bound {
        return Err(Error::Assertion(format!("concurrent-cell error {worst:.4} exceeds {bound}")));
    }
    Ok(())
}

fn run_bench_codec(max_records: usize, step: usize, reps: usize, out: &mut dyn Write) -> Result<()> {
    let rows = run_bench(max_records, step, reps, 1)?;
    writeln!(out, "{CSV_HEADER}").map_err(io_out)?;
    for r in &rows {
        writeln!(out, "{}", r.csv_line()).map_err(io_out)?;
    }
    check_rows(&rows)
}

fn merge_stats(a: &WorkloadStats, b: &WorkloadStats) -> WorkloadStats {
    let m = |x: &Summary, y: &Summary| x.merge(y);
    WorkloadStats {
        posts_per_user: m(&a.posts_per_user, &b.posts_per_user),
        tags_per_post: m(&a.tags_per_post, &b.tags_per_post),
        comments_per_user: m(&a.comments_per_user, &b.comments_per_user),
        comments_received_per_post: m(&a.comments_received_per_post, &b.comments_received_per_post),
        tags_created_per_user: m(&a.tags_created_per_user, &b.tags_created_per_user),
        posts_per_tag: m(&a.posts_per_tag, &b.posts_per_tag),
        comments_per_tag: m(&a.comments_per_tag, &b.comments_per_tag),
        photos_per_post: m(&a.photos_per_post, &b.photos_per_post),
        photos_per_tag: m(&a.photos_per_tag, &b.photos_per_tag),
    }
}

fn run_workload_check(params: &Path, n_users: Option<u32>, seeds: &[u64], out: &mut dyn Write) -> Result<()> {
    let mut p = load_workload_params(params)?;
    if let Some(n) = n_users {
        p.n_users = n;
    }
    if seeds.is_empty() {
        return Err(Error::validation("at least one seed is required"));
    }
    let mut pooled = WorkloadStats::default();
    for &seed in seeds {
        let w = generate_workload(&p, &mut SplitMix64::derive(seed, Stream::Workload)).map_err(Error::validation)?;
        pooled = merge_stats(&pooled, &workload_stats(&w));
    }
    writeln!(out, "measure,n,observed_mean,observed_sd,configured_mean,configured_sd,within_3se").map_err(io_out)?;
    if p.n_users == 0 {
        return Ok(());
    }
    let configured: [(&str, &Measure); 5] = [
        ("posts_per_user", &p.posts_per_user),
        ("tags_per_post", &p.tags_per_post),
        ("comments_per_user", &p.comments_per_user),
        ("tags_created_per_user", &p.tags_created_per_user),
        ("photos_per_post", &p.photos_per_post),
    ];
    let checks = check_means(&p, &pooled);
    let mut failed = Vec::new();
    for (name, s) in pooled.rows() {
        let target = configured.iter().find(|(n, _)| *n == name).map(|(_, m)| m);
        let ok = checks.iter().find(|c| c.0 == name).map(|c| c.3);
        let cfg = target.map_or(",".to_string(), |m| format!("{},{}", m.mean, m.sd));
        let verdict = ok.map_or("", |b| if b { "yes" } else { "no" });
        writeln!(out, "{name},{},{:.4},{:.4},{cfg},{verdict}", s.n, s.mean, s.sd).map_err(io_out)?;
        if ok == Some(false) {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Assertion(format!("means off by more than 3 standard errors: {}", failed.join(", "))))
    }
}

fn run_replay(trace: &Path, expect: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let events = parse_trace(&read_text(trace)?).map_err(|e| Error::Validation(format!("{}: {e}", trace.display())))?;
    let metrics = compute_metrics(&events);
    out.write_all(metrics_to_json(&metrics).as_bytes()).map_err(io_out)?;
    if let Some(path) = expect {
        if metrics_from_json(path)? != metrics {
            return Err(Error::Assertion(format!("replayed metrics differ from {}", path.display())));
        }
    }
    Ok(())
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Run { config, out: dir, set } => run_scenario(&config, &dir, &set, out),
        Command::Calibrate { table, out: path, bound } => run_calibrate(&table, &path, bound, out),
        Command::BenchCodec { max_records, step, reps } => run_bench_codec(max_records, step, reps, out),
        Command::WorkloadCheck { params, n_users, seeds } => run_workload_check(&params, n_users, &seeds, out),
        Command::Replay { trace, expect } => run_replay(&trace, expect.as_deref(), out),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Errors go to `err`.
pub fn main<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
