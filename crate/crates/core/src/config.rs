//! Simulation configuration: defaults, the `key = value` file format, CLI
//! flags, and cartesian sweep expansion.
//!
//! File format: one `key = value` per line, `#` starts a comment, sweepable
//! keys take comma-separated lists. Every key has a CLI flag of the same name
//! with `_` replaced by `-` (`distance_m` is `--distance-m`). Flags override
//! file keys.
//!
//! Per-run seeds come from [`split_seed`]: the `index`-th output of a
//! SplitMix64 generator started at `master_seed`, i.e.
//!
//! ```text
//! z = master + (index + 1) * 0x9E3779B97F4A7C15
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! seed = z ^ (z >> 31)
//! ```
//!
//! The index is the replication index, so replication `r` of every sweep
//! point shares a seed (common random numbers across the sweep).

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use thiserror::Error;

use crate::channel::{ChannelHooks, Scenario, UpaConfig};
use crate::phy::{tbs_and_prb, LinkAbstraction, McsTable, Numerology, PhyError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Flag(String),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Flag(name) => write!(f, "flag --{name}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key {key:?} at {origin}")]
    UnknownKey { key: String, origin: Origin },
    #[error("malformed value {value:?} for {key} at {origin}: {reason}")]
    Malformed {
        key: String,
        value: String,
        origin: Origin,
        reason: String,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("invalid {field} = {value}: must satisfy {constraint}")]
    Invalid {
        field: &'static str,
        value: String,
        constraint: &'static str,
    },
    #[error("{0}")]
    Cli(String),
    #[error(transparent)]
    Phy(#[from] PhyError),
}

/// Test-only knobs that bypass parts of the model. Not part of the file format.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimHooks {
    pub channel: ChannelHooks,
    pub forced_bler: Option<f64>,
}

/// One fully resolved simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub carrier_freq_ghz: f64,
    pub bandwidth_mhz: f64,
    pub numerology: u8,
    pub mcs_index: u8,
    pub distance_m: f64,
    pub speed_mps: f64,
    pub payload_bytes: u32,
    pub inter_packet_interval_ms: f64,
    pub reorder_timer_ms: f64,
    pub harq_enabled: bool,
    pub max_harq_retx: u32,
    pub tx_power_dbm: f64,
    pub noise_figure_db: f64,
    pub duration_s: f64,
    pub bler_gap_db: f64,
    pub bler_slope_per_db: f64,
    pub upa: UpaConfig,
    pub seed: u64,
    pub run_id: u64,
    pub mcs_table: Arc<McsTable>,
    pub hooks: SimHooks,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scenario: Scenario::Highway,
            carrier_freq_ghz: 28.0,
            bandwidth_mhz: 100.0,
            numerology: 2,
            mcs_index: 0,
            distance_m: 100.0,
            speed_mps: 20.0,
            payload_bytes: 100,
            inter_packet_interval_ms: 1.0,
            reorder_timer_ms: 10.0,
            harq_enabled: false,
            max_harq_retx: 3,
            // Calibrated: +3 dB over 23 dBm.
            tx_power_dbm: 26.0,
            // Calibrated: -3 dB from 5 dB.
            noise_figure_db: 2.0,
            duration_s: 10.0,
            bler_gap_db: 1.5,
            bler_slope_per_db: 2.0,
            upa: UpaConfig::default(),
            seed: DEFAULT_MASTER_SEED,
            run_id: 0,
            mcs_table: Arc::new(McsTable::builtin()),
            hooks: SimHooks::default(),
        }
    }
}

pub const DEFAULT_REPLICATIONS: u32 = 50;
pub const DEFAULT_MASTER_SEED: u64 = 1;

fn invalid(field: &'static str, value: impl fmt::Display, constraint: &'static str) -> ConfigError {
    ConfigError::Invalid {
        field,
        value: value.to_string(),
        constraint,
    }
}

impl SimConfig {
    pub fn numerology(&self) -> Numerology {
        Numerology::new(self.numerology).expect("validated numerology")
    }

    pub fn link_abstraction(&self) -> LinkAbstraction {
        LinkAbstraction {
            gap_db: self.bler_gap_db,
            slope_per_db: self.bler_slope_per_db,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |field, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, v, "> 0"))
            }
        };
        pos("distance_m", self.distance_m)?;
        pos("bw_mhz", self.bandwidth_mhz)?;
        pos("duration_s", self.duration_s)?;
        pos("ipi_ms", self.inter_packet_interval_ms)?;
        pos("bler_slope", self.bler_slope_per_db)?;
        if !(self.reorder_timer_ms >= 0.0 && self.reorder_timer_ms.is_finite()) {
            return Err(invalid("reorder_timer_ms", self.reorder_timer_ms, ">= 0"));
        }
        if !(self.speed_mps >= 0.0 && self.speed_mps.is_finite()) {
            return Err(invalid("speed_mps", self.speed_mps, ">= 0"));
        }
        if !(6.0..=100.0).contains(&self.carrier_freq_ghz) {
            return Err(invalid("fc_ghz", self.carrier_freq_ghz, "6 <= fc <= 100 GHz"));
        }
        if self.numerology > 3 {
            return Err(invalid("numerology", self.numerology, "0 <= numerology <= 3"));
        }
        if self.payload_bytes == 0 {
            return Err(invalid("payload_bytes", self.payload_bytes, ">= 1"));
        }
        if self.upa.rows == 0 || self.upa.cols == 0 {
            return Err(invalid("upa_rows/upa_cols", self.upa.rows.min(self.upa.cols), ">= 1"));
        }
        for (field, v) in [
            ("tx_power_dbm", self.tx_power_dbm),
            ("noise_figure_db", self.noise_figure_db),
            ("bler_gap_db", self.bler_gap_db),
        ] {
            if !v.is_finite() {
                return Err(invalid(field, v, "a finite number"));
            }
        }
        if SimTime::from_ms(self.inter_packet_interval_ms).as_nanos() == 0 {
            return Err(invalid("ipi_ms", self.inter_packet_interval_ms, ">= 1 ns"));
        }
        let mcs = self.mcs_table.get(self.mcs_index)?;
        tbs_and_prb(self.payload_bytes, &mcs, self.numerology(), self.bandwidth_mhz)?;
        Ok(())
    }

    /// Serializes to the `key = value` format. Hooks and custom MCS tables
    /// are not represented.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("scenario", self.scenario.to_string());
        put("fc_ghz", self.carrier_freq_ghz.to_string());
        put("bw_mhz", self.bandwidth_mhz.to_string());
        put("numerology", self.numerology.to_string());
        put("mcs", self.mcs_index.to_string());
        put("distance_m", self.distance_m.to_string());
        put("speed_mps", self.speed_mps.to_string());
        put("payload_bytes", self.payload_bytes.to_string());
        put("ipi_ms", self.inter_packet_interval_ms.to_string());
        put("reorder_timer_ms", self.reorder_timer_ms.to_string());
        put("harq", if self.harq_enabled { "on" } else { "off" }.to_string());
        put("max_retx", self.max_harq_retx.to_string());
        put("tx_power_dbm", self.tx_power_dbm.to_string());
        put("noise_figure_db", self.noise_figure_db.to_string());
        put("duration_s", self.duration_s.to_string());
        put("bler_gap_db", self.bler_gap_db.to_string());
        put("bler_slope", self.bler_slope_per_db.to_string());
        put("upa_rows", self.upa.rows.to_string());
        put("upa_cols", self.upa.cols.to_string());
        put("seed", self.seed.to_string());
        put("run_id", self.run_id.to_string());
        s
    }

    /// Parses a single resolved config. `seed` is taken as the run seed
    /// verbatim and `run_id` is accepted; list values are rejected.
    pub fn from_kv(text: &str) -> Result<SimConfig, ConfigError> {
        let mut spec = SweepSpec::default();
        let mut run_id = 0;
        for (line, key, value) in kv_lines(text)? {
            let origin = Origin::Line(line);
            if key == "run_id" {
                run_id = parse_scalar(key, value, &origin)?;
                continue;
            }
            if value.contains(',') {
                return Err(ConfigError::Malformed {
                    key: key.into(),
                    value: value.into(),
                    origin,
                    reason: "a single resolved config takes one value per key".into(),
                });
            }
            spec.apply(key, value, origin)?;
        }
        let mut cfg = spec.point_configs().remove(0);
        cfg.seed = spec.master_seed;
        cfg.run_id = run_id;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Identity of the sweep point this run belongs to (everything except
    /// seed and run id).
    pub fn point_key(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        c.run_id = 0;
        c.to_kv()
    }
}

use crate::engine::SimTime;

/// A sweep: scalar settings in `base` plus a value list per sweepable axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: SimConfig,
    pub distances_m: Vec<f64>,
    pub mcs_indices: Vec<u8>,
    pub carrier_freqs_ghz: Vec<f64>,
    pub scenarios: Vec<Scenario>,
    pub reorder_timers_ms: Vec<f64>,
    pub harq: Vec<bool>,
    pub replications: u32,
    pub master_seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let base = SimConfig::default();
        SweepSpec {
            distances_m: vec![base.distance_m],
            mcs_indices: vec![base.mcs_index],
            carrier_freqs_ghz: vec![base.carrier_freq_ghz],
            scenarios: vec![base.scenario],
            reorder_timers_ms: vec![base.reorder_timer_ms],
            harq: vec![base.harq_enabled],
            replications: DEFAULT_REPLICATIONS,
            master_seed: DEFAULT_MASTER_SEED,
            base,
        }
    }
}

/// Keys accepted in config files (and, as flags, on the command line).
pub const KEYS: &[&str] = &[
    "scenario",
    "fc_ghz",
    "bw_mhz",
    "numerology",
    "mcs",
    "distance_m",
    "speed_mps",
    "payload_bytes",
    "ipi_ms",
    "reorder_timer_ms",
    "harq",
    "max_retx",
    "tx_power_dbm",
    "noise_figure_db",
    "duration_s",
    "runs",
    "seed",
    "bler_gap_db",
    "bler_slope",
    "upa_rows",
    "upa_cols",
];

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str, origin: &Origin) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| ConfigError::Malformed {
        key: key.into(),
        value: value.into(),
        origin: origin.clone(),
        reason: e.to_string(),
    })
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str, origin: &Origin) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    let items: Vec<&str> = value.split(',').map(str::trim).collect();
    if items.iter().any(|s| s.is_empty()) {
        return Err(ConfigError::Malformed {
            key: key.into(),
            value: value.into(),
            origin: origin.clone(),
            reason: "empty list element".into(),
        });
    }
    items.into_iter().map(|s| parse_scalar(key, s, origin)).collect()
}

/// `on|off|true|false|1|0`.
#[derive(Debug, Clone, Copy)]
struct Toggle(bool);

impl std::str::FromStr for Toggle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "on" | "true" | "1" | "yes" => Ok(Toggle(true)),
            "off" | "false" | "0" | "no" => Ok(Toggle(false)),
            other => Err(format!("expected on|off, got {other:?}")),
        }
    }
}

fn kv_lines(text: &str) -> Result<Vec<(usize, &str, &str)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or(ConfigError::Syntax { line: i + 1 })?;
        out.push((i + 1, k.trim(), v.trim()));
    }
    Ok(out)
}

impl SweepSpec {
    /// Applies one `key = value` setting.
    pub fn apply(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        let o = &origin;
        let b = &mut self.base;
        match key {
            "scenario" => self.scenarios = parse_list(key, value, o)?,
            "fc_ghz" => self.carrier_freqs_ghz = parse_list(key, value, o)?,
            "mcs" => self.mcs_indices = parse_list(key, value, o)?,
            "distance_m" => self.distances_m = parse_list(key, value, o)?,
            "reorder_timer_ms" => self.reorder_timers_ms = parse_list(key, value, o)?,
            "harq" => {
                self.harq = parse_list::<Toggle>(key, value, o)?
                    .into_iter()
                    .map(|t| t.0)
                    .collect()
            }
            "bw_mhz" => b.bandwidth_mhz = parse_scalar(key, value, o)?,
            "numerology" => b.numerology = parse_scalar(key, value, o)?,
            "speed_mps" => b.speed_mps = parse_scalar(key, value, o)?,
            "payload_bytes" => b.payload_bytes = parse_scalar(key, value, o)?,
            "ipi_ms" => b.inter_packet_interval_ms = parse_scalar(key, value, o)?,
            "max_retx" => b.max_harq_retx = parse_scalar(key, value, o)?,
            "tx_power_dbm" => b.tx_power_dbm = parse_scalar(key, value, o)?,
            "noise_figure_db" => b.noise_figure_db = parse_scalar(key, value, o)?,
            "duration_s" => b.duration_s = parse_scalar(key, value, o)?,
            "bler_gap_db" => b.bler_gap_db = parse_scalar(key, value, o)?,
            "bler_slope" => b.bler_slope_per_db = parse_scalar(key, value, o)?,
            "upa_rows" => b.upa.rows = parse_scalar(key, value, o)?,
            "upa_cols" => b.upa.cols = parse_scalar(key, value, o)?,
            "runs" => self.replications = parse_scalar(key, value, o)?,
            "seed" => self.master_seed = parse_scalar(key, value, o)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.into(),
                    origin,
                })
            }
        }
        Ok(())
    }

    /// Applies every line of a config file.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        for (line, key, value) in kv_lines(text)? {
            self.apply(key, value, Origin::Line(line))?;
        }
        Ok(())
    }

    pub fn num_points(&self) -> usize {
        self.distances_m.len()
            * self.mcs_indices.len()
            * self.carrier_freqs_ghz.len()
            * self.scenarios.len()
            * self.reorder_timers_ms.len()
            * self.harq.len()
    }

    pub fn num_runs(&self) -> usize {
        self.num_points() * self.replications as usize
    }

    /// One config per sweep point, lexicographic over (distance, mcs, fc,
    /// scenario, reorder timer, harq) in the order values were given. Seed and
    /// run id are left at zero.
    pub fn point_configs(&self) -> Vec<SimConfig> {
        let mut out = Vec::with_capacity(self.num_points());
        for &d in &self.distances_m {
            for &mcs in &self.mcs_indices {
                for &fc in &self.carrier_freqs_ghz {
                    for &sc in &self.scenarios {
                        for &t in &self.reorder_timers_ms {
                            for &h in &self.harq {
                                out.push(SimConfig {
                                    distance_m: d,
                                    mcs_index: mcs,
                                    carrier_freq_ghz: fc,
                                    scenario: sc,
                                    reorder_timer_ms: t,
                                    harq_enabled: h,
                                    seed: 0,
                                    run_id: 0,
                                    ..self.base.clone()
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replications < 1 {
            return Err(invalid("runs", self.replications, ">= 1"));
        }
        for (field, len) in [
            ("distance_m", self.distances_m.len()),
            ("mcs", self.mcs_indices.len()),
            ("fc_ghz", self.carrier_freqs_ghz.len()),
            ("scenario", self.scenarios.len()),
            ("reorder_timer_ms", self.reorder_timers_ms.len()),
            ("harq", self.harq.len()),
        ] {
            if len == 0 {
                return Err(invalid(field, "[]", "at least one value"));
            }
        }
        self.point_configs().iter().try_for_each(SimConfig::validate)
    }
}

/// The `index`-th output of SplitMix64 seeded with `master`.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Expands a validated sweep into one config per run, points in
/// [`SweepSpec::point_configs`] order, replications innermost.
pub fn expand_sweep(spec: &SweepSpec) -> Vec<SimConfig> {
    let mut out = Vec::with_capacity(spec.num_runs());
    let mut run_id = 0;
    for point in spec.point_configs() {
        for rep in 0..u64::from(spec.replications) {
            out.push(SimConfig {
                seed: split_seed(spec.master_seed, rep),
                run_id,
                ..point.clone()
            });
            run_id += 1;
        }
    }
    out
}

#[derive(Debug, Default, Parser)]
#[command(
    name = "mmwave-v2v",
    version,
    about = "Monte Carlo simulator of a 28/60 GHz sidelink between two platooning vehicles",
    allow_negative_numbers = true
)]
pub struct Cli {
    /// highway|urban, comma-separated for a sweep
    #[arg(long)]
    pub scenario: Option<String>,
    /// Carrier frequency list, GHz
    #[arg(long)]
    pub fc_ghz: Option<String>,
    #[arg(long)]
    pub bw_mhz: Option<String>,
    /// Numerology index 0..=3
    #[arg(long)]
    pub numerology: Option<String>,
    /// MCS index list
    #[arg(long)]
    pub mcs: Option<String>,
    /// Inter-vehicle distance list, m
    #[arg(long)]
    pub distance_m: Option<String>,
    #[arg(long)]
    pub speed_mps: Option<String>,
    #[arg(long)]
    pub payload_bytes: Option<String>,
    /// Inter-packet interval, ms
    #[arg(long)]
    pub ipi_ms: Option<String>,
    /// RLC t-Reordering list, ms
    #[arg(long)]
    pub reorder_timer_ms: Option<String>,
    /// on|off list
    #[arg(long)]
    pub harq: Option<String>,
    #[arg(long)]
    pub max_retx: Option<String>,
    #[arg(long)]
    pub tx_power_dbm: Option<String>,
    #[arg(long)]
    pub noise_figure_db: Option<String>,
    #[arg(long)]
    pub duration_s: Option<String>,
    /// Replications per sweep point
    #[arg(long)]
    pub runs: Option<String>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<String>,
    /// BLER curve gap to capacity, dB
    #[arg(long)]
    pub bler_gap_db: Option<String>,
    /// BLER curve slope, per dB
    #[arg(long)]
    pub bler_slope: Option<String>,
    #[arg(long)]
    pub upa_rows: Option<String>,
    #[arg(long)]
    pub upa_cols: Option<String>,

    /// Config file with `key = value` lines
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// MCS table CSV (index,Qm,R)
    #[arg(long)]
    pub mcs_table: Option<PathBuf>,
    /// Per-run CSV output (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-point summary CSV output
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Event log output
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Per-segment channel samples CSV output
    #[arg(long)]
    pub dump_channel: Option<PathBuf>,
    /// Run replications one at a time
    #[arg(long)]
    pub serial: bool,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl Cli {
    fn config_flags(&self) -> Vec<(&'static str, &str)> {
        let all = [
            ("scenario", &self.scenario),
            ("fc_ghz", &self.fc_ghz),
            ("bw_mhz", &self.bw_mhz),
            ("numerology", &self.numerology),
            ("mcs", &self.mcs),
            ("distance_m", &self.distance_m),
            ("speed_mps", &self.speed_mps),
            ("payload_bytes", &self.payload_bytes),
            ("ipi_ms", &self.ipi_ms),
            ("reorder_timer_ms", &self.reorder_timer_ms),
            ("harq", &self.harq),
            ("max_retx", &self.max_retx),
            ("tx_power_dbm", &self.tx_power_dbm),
            ("noise_figure_db", &self.noise_figure_db),
            ("duration_s", &self.duration_s),
            ("runs", &self.runs),
            ("seed", &self.seed),
            ("bler_gap_db", &self.bler_gap_db),
            ("bler_slope", &self.bler_slope),
            ("upa_rows", &self.upa_rows),
            ("upa_cols", &self.upa_cols),
        ];
        all.into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }

    /// Builds the sweep from already-read config file text and these flags.
    pub fn sweep(&self, file_text: Option<&str>) -> Result<SweepSpec, ConfigError> {
        let mut spec = SweepSpec::default();
        if let Some(path) = &self.mcs_table {
            spec.base.mcs_table = Arc::new(McsTable::load(path)?);
        }
        if let Some(text) = file_text {
            spec.apply_file(text)?;
        }
        for (key, value) in self.config_flags() {
            spec.apply(key, value, Origin::Flag(key.replace('_', "-")))?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses command-line arguments (without the program name) and optional
/// config file text into a validated sweep.
pub fn parse_config<S: AsRef<str>>(cli_args: &[S], file_text: Option<&str>) -> Result<SweepSpec, ConfigError> {
    let argv = std::iter::once("mmwave-v2v").chain(cli_args.iter().map(AsRef::as_ref));
    let cli = Cli::try_parse_from(argv).map_err(|e| ConfigError::Cli(e.to_string()))?;
    cli.sweep(file_text)
}
