//! Monte Carlo orchestration: run replications (optionally in parallel),
//! aggregate per sweep point, write CSV.
//!
//! Each replication owns its own engine and RNG, and results are merged by
//! run id, so the output does not depend on thread count or scheduling.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::sim::{self, RunOptions, RunOutput};
use crate::traffic::RunMetrics;

pub const RUN_COLUMNS: &[&str] = &[
    "run_id",
    "scenario",
    "fc_ghz",
    "bw_mhz",
    "numerology",
    "mcs",
    "distance_m",
    "reorder_timer_ms",
    "harq",
    "seed",
    "sent",
    "delivered",
    "prr",
    "mean_delay_ms",
    "p95_delay_ms",
    "tx_attempts",
    "mac_drops",
    "rlc_timer_expirations",
    "mean_buffer_wait_ms",
];

pub const SUMMARY_COLUMNS: &[&str] = &[
    "scenario",
    "fc_ghz",
    "bw_mhz",
    "numerology",
    "mcs",
    "distance_m",
    "reorder_timer_ms",
    "harq",
    "n_reps",
    "prr_mean",
    "prr_ci95",
    "delay_mean_ms",
    "delay_ci95_ms",
];

/// Written for absent values (no deliveries, fewer than two replications).
pub const NA: &str = "NA";

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: SimConfig,
    pub metrics: RunMetrics,
}

pub fn run_replication(cfg: &SimConfig) -> Result<RunMetrics> {
    Ok(sim::run(cfg, RunOptions::default())?.metrics)
}

pub fn run_replication_detailed(cfg: &SimConfig, opts: RunOptions) -> Result<RunOutput> {
    sim::run(cfg, opts)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Parallelism {
    Serial,
    /// All available cores.
    #[default]
    Auto,
    Threads(usize),
}

/// Runs every config and returns outputs sorted by run id. On failure the
/// error of the lowest failing run id is returned.
pub fn run_sweep_detailed(
    configs: &[SimConfig],
    par: Parallelism,
    opts: RunOptions,
) -> Result<Vec<(SimConfig, RunOutput)>> {
    let one = |c: &SimConfig| sim::run(c, opts).map(|o| (c.clone(), o));
    let results: Vec<Result<(SimConfig, RunOutput)>> = match par {
        Parallelism::Serial => configs.iter().map(one).collect(),
        Parallelism::Auto => configs.par_iter().map(one).collect(),
        Parallelism::Threads(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(|| configs.par_iter().map(one).collect()),
    };
    let mut out = results.into_iter().collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|(c, _)| c.run_id);
    Ok(out)
}

pub fn run_sweep(configs: &[SimConfig], par: Parallelism) -> Result<Vec<RunRecord>> {
    Ok(run_sweep_detailed(configs, par, RunOptions::default())?
        .into_iter()
        .map(|(config, o)| RunRecord {
            config,
            metrics: o.metrics,
        })
        .collect())
}

/// Mean and 95% half-width (normal approximation, sample std) of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    /// `None` below two samples.
    pub ci95: Option<f64>,
}

pub fn estimate(values: &[f64]) -> Option<Estimate> {
    if values.is_empty() {
        return None;
    }
    // Sorted summation makes the result independent of input order.
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    // Offsetting by the smallest value keeps constant samples exact.
    let base = v[0];
    let mean = base + v.iter().map(|x| x - base).sum::<f64>() / n;
    let ci95 = (v.len() >= 2).then(|| {
        let mut sq: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
        sq.sort_by(f64::total_cmp);
        let var = sq.iter().sum::<f64>() / (n - 1.0);
        1.96 * var.sqrt() / n.sqrt()
    });
    Some(Estimate { mean, ci95 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// Config of the lowest run id in the group; seed and run id are not
    /// meaningful for the point.
    pub point: SimConfig,
    pub n_reps: usize,
    pub prr: Estimate,
    /// Over replications that delivered at least one packet.
    pub delay_ms: Option<Estimate>,
}

/// Groups records by sweep point and summarizes each group. Rows come out in
/// order of each group's lowest run id.
pub fn aggregate(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<String, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.config.point_key()).or_default().push(r);
    }
    let mut rows: Vec<(u64, SummaryRow)> = groups
        .into_values()
        .map(|g| {
            let first = g.iter().min_by_key(|r| r.config.run_id).expect("nonempty group");
            let prr: Vec<f64> = g.iter().map(|r| r.metrics.prr).collect();
            let delay: Vec<f64> = g.iter().filter_map(|r| r.metrics.mean_delay_ms).collect();
            (
                first.config.run_id,
                SummaryRow {
                    point: first.config.clone(),
                    n_reps: g.len(),
                    prr: estimate(&prr).expect("nonempty group"),
                    delay_ms: estimate(&delay),
                },
            )
        })
        .collect();
    rows.sort_by_key(|(id, _)| *id);
    rows.into_iter().map(|(_, r)| r).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

fn point_fields(c: &SimConfig) -> [String; 8] {
    [
        c.scenario.to_string(),
        c.carrier_freq_ghz.to_string(),
        c.bandwidth_mhz.to_string(),
        c.numerology.to_string(),
        c.mcs_index.to_string(),
        c.distance_m.to_string(),
        c.reorder_timer_ms.to_string(),
        if c.harq_enabled { "on" } else { "off" }.to_string(),
    ]
}

fn run_fields(r: &RunRecord) -> Vec<String> {
    let c = &r.config;
    let m = &r.metrics;
    let p = point_fields(c);
    let mut f = Vec::with_capacity(RUN_COLUMNS.len());
    f.push(c.run_id.to_string());
    f.extend(p);
    f.extend([
        c.seed.to_string(),
        m.sent.to_string(),
        m.delivered.to_string(),
        m.prr.to_string(),
        opt(m.mean_delay_ms),
        opt(m.p95_delay_ms),
        m.tx_attempts.to_string(),
        m.mac_drops.to_string(),
        m.rlc_timer_expirations.to_string(),
        opt(m.mean_buffer_wait_ms),
    ]);
    f
}

fn summary_fields(s: &SummaryRow) -> Vec<String> {
    let mut f: Vec<String> = point_fields(&s.point).into();
    f.extend([
        s.n_reps.to_string(),
        s.prr.mean.to_string(),
        opt(s.prr.ci95),
        opt(s.delay_ms.map(|d| d.mean)),
        opt(s.delay_ms.and_then(|d| d.ci95)),
    ]);
    f
}

fn write_rows<W: Write>(w: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header)?;
    for row in rows {
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_csv_to<W: Write>(records: &[RunRecord], w: W) -> Result<()> {
    Ok(write_rows(w, RUN_COLUMNS, records.iter().map(run_fields))?)
}

pub fn write_summary_csv_to<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    Ok(write_rows(w, SUMMARY_COLUMNS, rows.iter().map(summary_fields))?)
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn with_path(path: &Path, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => Error::Io {
            path: path.to_path_buf(),
            source: match c.into_kind() {
                csv::ErrorKind::Io(io) => io,
                _ => unreachable!(),
            },
        },
        other => other,
    })
}

/// Writes the per-run CSV, overwriting `path`.
pub fn write_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let f = create(path)?;
    with_path(path, write_csv_to(records, io::BufWriter::new(f)))
}

/// Writes the per-point summary CSV, overwriting `path`.
pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let f = create(path)?;
    with_path(path, write_summary_csv_to(rows, io::BufWriter::new(f)))
}

pub const CHANNEL_COLUMNS: &[&str] = &[
    "run_id",
    "time_ms",
    "state",
    "pathloss_db",
    "blockage_db",
    "shadowing_db",
    "absorption_db",
    "rx_power_dbm",
];

/// Per-segment channel samples of every run, prefixed by run id.
pub fn write_channel_dump_to<W: Write>(runs: &[(SimConfig, RunOutput)], w: W) -> Result<()> {
    let rows = runs.iter().flat_map(|(c, o)| {
        o.segments.iter().map(move |seg| {
            let s = &seg.sample;
            vec![
                c.run_id.to_string(),
                seg.start.as_ms().to_string(),
                s.state.to_string(),
                s.pathloss_db.to_string(),
                s.blockage_db.to_string(),
                s.shadowing_db.to_string(),
                s.absorption_db.to_string(),
                s.rx_power_dbm.to_string(),
            ]
        })
    });
    Ok(write_rows(w, CHANNEL_COLUMNS, rows)?)
}

/// Event logs of every run as `run_id,time_ns,kind,summary` lines.
pub fn write_trace_to<W: Write>(runs: &[(SimConfig, RunOutput)], mut w: W) -> Result<()> {
    let io = |source| Error::Io {
        path: "<trace>".into(),
        source,
    };
    writeln!(w, "run_id,time_ns,kind,summary").map_err(io)?;
    for (c, o) in runs {
        for line in &o.trace {
            writeln!(w, "{},{line}", c.run_id).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn write_channel_dump(runs: &[(SimConfig, RunOutput)], path: &Path) -> Result<()> {
    let f = create(path)?;
    with_path(path, write_channel_dump_to(runs, io::BufWriter::new(f)))
}

pub fn write_trace(runs: &[(SimConfig, RunOutput)], path: &Path) -> Result<()> {
    let f = create(path)?;
    write_trace_to(runs, io::BufWriter::new(f)).map_err(|e| match e {
        Error::Io { source, .. } => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{expand_sweep, parse_config};

    fn record(run_id: u64, prr: f64, delay: Option<f64>) -> RunRecord {
        RunRecord {
            config: SimConfig {
                run_id,
                seed: run_id * 7,
                ..SimConfig::default()
            },
            metrics: RunMetrics {
                sent: 100,
                delivered: (prr * 100.0) as u64,
                delays_ms: vec![],
                prr,
                mean_delay_ms: delay,
                p95_delay_ms: delay,
                tx_attempts: 100,
                mac_drops: 0,
                rlc_stale_discards: 0,
                rlc_duplicates: 0,
                rlc_timer_expirations: 0,
                mean_buffer_wait_ms: None,
            },
        }
    }

    #[test]
    fn identical_values_zero_ci() {
        let e = estimate(&[0.7; 10]).unwrap();
        assert_eq!(e.mean, 0.7);
        assert_eq!(e.ci95, Some(0.0));
    }

    #[test]
    fn two_values_mean() {
        let e = estimate(&[0.8, 1.0]).unwrap();
        assert!((e.mean - 0.9).abs() < 1e-15);
    }

    #[test]
    fn single_replication_has_no_ci() {
        let rows = aggregate(&[record(0, 1.0, Some(0.5))]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].n_reps, 1);
        assert_eq!(rows[0].prr.ci95, None);
        let mut buf = Vec::new();
        write_summary_csv_to(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",1,1,NA,0.5,NA"), "{text}");
    }

    #[test]
    fn groups_by_point_in_run_id_order() {
        let spec = parse_config(&["--distance-m", "10,20", "--runs", "3"], None).unwrap();
        let recs: Vec<RunRecord> = expand_sweep(&spec)
            .into_iter()
            .map(|c| RunRecord {
                metrics: record(0, c.distance_m / 100.0, None).metrics,
                config: c,
            })
            .collect();
        let rows = aggregate(&recs);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].point.distance_m, 10.0);
        assert_eq!(rows[0].n_reps, 3);
        assert_eq!(rows[1].prr.mean, 0.2);
        assert_eq!(rows[0].delay_ms, None);
    }

    #[test]
    fn zero_rows_is_header_only() {
        let mut buf = Vec::new();
        write_csv_to(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), RUN_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn unwritable_path_names_path() {
        let p = Path::new("/nonexistent-dir/x.csv");
        let err = write_csv(&[], p).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"), "{err}");
    }
}
