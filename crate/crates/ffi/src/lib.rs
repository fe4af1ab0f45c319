//! C ABI for the mmwave-v2v simulator.
//!
//! Every fallible function returns an [`MmvStatus`]; on failure a message is
//! available from [`mmv_last_error`] on the same thread. Objects are opaque
//! handles created by `*_new`/`*_parse`/`*_run` style calls and released with
//! the matching `*_free`. Strings returned by the library are freed with
//! [`mmv_string_free`].
//!
//! Absent metric values (no deliveries) are reported as NaN.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mmwave_v2v::config::{expand_sweep, parse_config, SimConfig, SweepSpec};
use mmwave_v2v::harness::{self, Parallelism, RunRecord};
use mmwave_v2v::traffic::RunMetrics;
use mmwave_v2v::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Simulation = 4,
    Io = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// A single resolved run configuration.
pub struct MmvConfig(SimConfig);

/// An expanded sweep: one config per run, in run-id order.
pub struct MmvSweep {
    configs: Vec<SimConfig>,
}

/// Per-run results of a sweep, in run-id order.
pub struct MmvResults(Vec<RunRecord>);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmvRunMetrics {
    pub run_id: u64,
    pub seed: u64,
    pub sent: u64,
    pub delivered: u64,
    pub prr: f64,
    pub mean_delay_ms: f64,
    pub p95_delay_ms: f64,
    pub tx_attempts: u64,
    pub mac_drops: u64,
    pub rlc_stale_discards: u64,
    pub rlc_duplicates: u64,
    pub rlc_timer_expirations: u64,
    pub mean_buffer_wait_ms: f64,
}

impl MmvRunMetrics {
    fn new(cfg: &SimConfig, m: &RunMetrics) -> Self {
        let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
        MmvRunMetrics {
            run_id: cfg.run_id,
            seed: cfg.seed,
            sent: m.sent,
            delivered: m.delivered,
            prr: m.prr,
            mean_delay_ms: nan(m.mean_delay_ms),
            p95_delay_ms: nan(m.p95_delay_ms),
            tx_attempts: m.tx_attempts,
            mac_drops: m.mac_drops,
            rlc_stale_discards: m.rlc_stale_discards,
            rlc_duplicates: m.rlc_duplicates,
            rlc_timer_expirations: m.rlc_timer_expirations,
            mean_buffer_wait_ms: nan(m.mean_buffer_wait_ms),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type Failure = (MmvStatus, String);

fn status_of(e: &Error) -> MmvStatus {
    match e {
        Error::Config(_) | Error::Phy(_) => MmvStatus::Config,
        Error::Io { .. } | Error::Csv(_) => MmvStatus::Io,
        Error::Mac(_) | Error::Traffic(_) => MmvStatus::Simulation,
    }
}

fn fail(e: impl Into<Error>) -> Failure {
    let e = e.into();
    (status_of(&e), e.to_string())
}

/// Runs `f`, converting errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MmvStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MmvStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MmvStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| (MmvStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| (MmvStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((MmvStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (MmvStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s).expect("no interior NUL").into_raw()
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next library call on this thread.
#[no_mangle]
pub extern "C" fn mmv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mmv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn mmv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a config with default settings.
#[no_mangle]
pub unsafe extern "C" fn mmv_config_new(out: *mut *mut MmvConfig) -> MmvStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(MmvConfig(SimConfig::default())));
        Ok(())
    })
}

/// Parses `key = value` text into a single resolved config. `seed` is the
/// run seed; `run_id` is accepted.
#[no_mangle]
pub unsafe extern "C" fn mmv_config_from_kv(text: *const c_char, out: *mut *mut MmvConfig) -> MmvStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_ptr(out, "out")?;
        let cfg = SimConfig::from_kv(text).map_err(fail)?;
        *out = Box::into_raw(Box::new(MmvConfig(cfg)));
        Ok(())
    })
}

/// Sets one key. The config is left unchanged if the result is invalid.
#[no_mangle]
pub unsafe extern "C" fn mmv_config_set(cfg: *mut MmvConfig, key: *const c_char, value: *const c_char) -> MmvStatus {
    guard(|| {
        let cfg = out_ptr(cfg, "cfg")?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        if key.contains(['\n', '=', '#']) || value.contains(['\n', '#']) {
            return Err((MmvStatus::Config, format!("invalid key/value {key:?} = {value:?}")));
        }
        let text = format!("{}{key} = {value}\n", cfg.0.to_kv());
        let mut next = SimConfig::from_kv(&text).map_err(fail)?;
        next.mcs_table = cfg.0.mcs_table.clone();
        next.hooks = cfg.0.hooks;
        next.validate().map_err(fail)?;
        cfg.0 = next;
        Ok(())
    })
}

/// Serializes to `key = value` text; free with `mmv_string_free`.
#[no_mangle]
pub unsafe extern "C" fn mmv_config_to_kv(cfg: *const MmvConfig, out: *mut *mut c_char) -> MmvStatus {
    guard(|| {
        let cfg = deref(cfg, "cfg")?;
        let out = out_ptr(out, "out")?;
        *out = to_c_string(cfg.0.to_kv());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mmv_config_free(cfg: *mut MmvConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs one replication.
#[no_mangle]
pub unsafe extern "C" fn mmv_run_replication(cfg: *const MmvConfig, out: *mut MmvRunMetrics) -> MmvStatus {
    guard(|| {
        let cfg = deref(cfg, "cfg")?;
        let out = out_ptr(out, "out")?;
        let m = harness::run_replication(&cfg.0).map_err(fail)?;
        *out = MmvRunMetrics::new(&cfg.0, &m);
        Ok(())
    })
}

/// Builds a sweep from optional config-file text (may be NULL) and CLI-style
/// arguments (`argv` may be NULL when `argc` is 0). Flags override file keys.
#[no_mangle]
pub unsafe extern "C" fn mmv_sweep_parse(
    file_text: *const c_char,
    argv: *const *const c_char,
    argc: usize,
    out: *mut *mut MmvSweep,
) -> MmvStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let text = if file_text.is_null() {
            None
        } else {
            Some(str_arg(file_text, "file_text")?)
        };
        let mut args = Vec::with_capacity(argc);
        if argc > 0 {
            if argv.is_null() {
                return Err((MmvStatus::NullPointer, "argv is NULL".into()));
            }
            for i in 0..argc {
                args.push(str_arg(*argv.add(i), "argv element")?);
            }
        }
        let spec: SweepSpec = parse_config(&args, text).map_err(fail)?;
        *out = Box::into_raw(Box::new(MmvSweep {
            configs: expand_sweep(&spec),
        }));
        Ok(())
    })
}

/// Number of runs in the sweep; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn mmv_sweep_len(sweep: *const MmvSweep) -> usize {
    sweep.as_ref().map_or(0, |s| s.configs.len())
}

/// Copies out the config of run `index`.
#[no_mangle]
pub unsafe extern "C" fn mmv_sweep_config(sweep: *const MmvSweep, index: usize, out: *mut *mut MmvConfig) -> MmvStatus {
    guard(|| {
        let sweep = deref(sweep, "sweep")?;
        let out = out_ptr(out, "out")?;
        let cfg = sweep
            .configs
            .get(index)
            .ok_or_else(|| (MmvStatus::OutOfRange, format!("run index {index} >= {}", sweep.configs.len())))?;
        *out = Box::into_raw(Box::new(MmvConfig(cfg.clone())));
        Ok(())
    })
}

/// Runs every replication. `threads` = 0 uses all cores, 1 runs serially.
/// Results do not depend on `threads`.
#[no_mangle]
pub unsafe extern "C" fn mmv_sweep_run(sweep: *const MmvSweep, threads: u32, out: *mut *mut MmvResults) -> MmvStatus {
    guard(|| {
        let sweep = deref(sweep, "sweep")?;
        let out = out_ptr(out, "out")?;
        let par = match threads {
            0 => Parallelism::Auto,
            1 => Parallelism::Serial,
            n => Parallelism::Threads(n as usize),
        };
        let recs = harness::run_sweep(&sweep.configs, par).map_err(fail)?;
        *out = Box::into_raw(Box::new(MmvResults(recs)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mmv_sweep_free(sweep: *mut MmvSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}

/// Number of runs in the results; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn mmv_results_len(results: *const MmvResults) -> usize {
    results.as_ref().map_or(0, |r| r.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn mmv_results_get(results: *const MmvResults, index: usize, out: *mut MmvRunMetrics) -> MmvStatus {
    guard(|| {
        let results = deref(results, "results")?;
        let out = out_ptr(out, "out")?;
        let r = results
            .0
            .get(index)
            .ok_or_else(|| (MmvStatus::OutOfRange, format!("result index {index} >= {}", results.0.len())))?;
        *out = MmvRunMetrics::new(&r.config, &r.metrics);
        Ok(())
    })
}

/// Writes the per-run CSV to `path`, overwriting it.
#[no_mangle]
pub unsafe extern "C" fn mmv_results_write_csv(results: *const MmvResults, path: *const c_char) -> MmvStatus {
    guard(|| {
        let results = deref(results, "results")?;
        let path = str_arg(path, "path")?;
        harness::write_csv(&results.0, Path::new(path)).map_err(fail)
    })
}

/// Writes the per-point summary CSV to `path`, overwriting it.
#[no_mangle]
pub unsafe extern "C" fn mmv_results_write_summary_csv(results: *const MmvResults, path: *const c_char) -> MmvStatus {
    guard(|| {
        let results = deref(results, "results")?;
        let path = str_arg(path, "path")?;
        harness::write_summary_csv(&harness::aggregate(&results.0), Path::new(path)).map_err(fail)
    })
}

#[no_mangle]
pub unsafe extern "C" fn mmv_results_free(results: *mut MmvResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, MmvStatus::Panic);
        let msg = unsafe { CStr::from_ptr(mmv_last_error()) }.to_str().unwrap();
        assert_eq!(msg, "panic: boom");
        assert_eq!(guard(|| Ok(())), MmvStatus::Ok);
        assert!(mmv_last_error().is_null());
    }

    #[test]
    fn version_is_package_version() {
        let v = unsafe { CStr::from_ptr(mmv_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
