use std::ffi::{c_char, CStr, CString};
use std::ptr;

use mmwave_v2v_ffi::*;

fn last_error() -> String {
    let p = mmv_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn parse(args: &[&str]) -> (MmvStatus, *mut MmvSweep) {
    let owned: Vec<CString> = args.iter().map(|a| CString::new(*a).unwrap()).collect();
    let ptrs: Vec<*const c_char> = owned.iter().map(|c| c.as_ptr()).collect();
    let mut sweep = ptr::null_mut();
    let s = unsafe { mmv_sweep_parse(ptr::null(), ptrs.as_ptr(), ptrs.len(), &mut sweep) };
    (s, sweep)
}

#[test]
fn config_lifecycle() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(mmv_config_new(&mut cfg), MmvStatus::Ok);
        let k = CString::new("distance_m").unwrap();
        let v = CString::new("10").unwrap();
        assert_eq!(mmv_config_set(cfg, k.as_ptr(), v.as_ptr()), MmvStatus::Ok);
        let k = CString::new("duration_s").unwrap();
        let v = CString::new("0.5").unwrap();
        assert_eq!(mmv_config_set(cfg, k.as_ptr(), v.as_ptr()), MmvStatus::Ok);

        let bad = CString::new("-5").unwrap();
        let k = CString::new("distance_m").unwrap();
        assert_eq!(mmv_config_set(cfg, k.as_ptr(), bad.as_ptr()), MmvStatus::Config);
        assert!(last_error().contains("distance_m"));

        let mut text = ptr::null_mut();
        assert_eq!(mmv_config_to_kv(cfg, &mut text), MmvStatus::Ok);
        let kv = CStr::from_ptr(text).to_str().unwrap().to_string();
        mmv_string_free(text);
        assert!(kv.contains("distance_m = 10\n"));

        let c_kv = CString::new(kv).unwrap();
        let mut copy = ptr::null_mut();
        assert_eq!(mmv_config_from_kv(c_kv.as_ptr(), &mut copy), MmvStatus::Ok);

        let mut a = std::mem::zeroed::<MmvRunMetrics>();
        let mut b = std::mem::zeroed::<MmvRunMetrics>();
        assert_eq!(mmv_run_replication(cfg, &mut a), MmvStatus::Ok);
        assert_eq!(mmv_run_replication(copy, &mut b), MmvStatus::Ok);
        assert_eq!(a, b);
        assert_eq!(a.sent, 500);
        assert_eq!(a.prr, 1.0);
        assert_eq!(a.mean_delay_ms, 0.5);
        mmv_config_free(cfg);
        mmv_config_free(copy);
    }
}

#[test]
fn sweep_and_results() {
    let (s, sweep) = parse(&["--mcs", "0,28", "--distance-m", "500", "--scenario", "urban", "--runs", "3", "--duration-s", "0.5"]);
    assert_eq!(s, MmvStatus::Ok);
    unsafe {
        assert_eq!(mmv_sweep_len(sweep), 6);
        let mut cfg = ptr::null_mut();
        assert_eq!(mmv_sweep_config(sweep, 5, &mut cfg), MmvStatus::Ok);
        mmv_config_free(cfg);
        assert_eq!(mmv_sweep_config(sweep, 6, &mut cfg), MmvStatus::OutOfRange);

        let mut serial = ptr::null_mut();
        let mut par = ptr::null_mut();
        assert_eq!(mmv_sweep_run(sweep, 1, &mut serial), MmvStatus::Ok);
        assert_eq!(mmv_sweep_run(sweep, 0, &mut par), MmvStatus::Ok);
        assert_eq!(mmv_results_len(serial), 6);
        for i in 0..6 {
            let mut a = std::mem::zeroed::<MmvRunMetrics>();
            let mut b = std::mem::zeroed::<MmvRunMetrics>();
            assert_eq!(mmv_results_get(serial, i, &mut a), MmvStatus::Ok);
            assert_eq!(mmv_results_get(par, i, &mut b), MmvStatus::Ok);
            assert_eq!(a.run_id, i as u64);
            assert_eq!(a.sent, b.sent);
            assert_eq!(a.delivered, b.delivered);
            assert_eq!(a.seed, b.seed);
        }
        let mut m = std::mem::zeroed::<MmvRunMetrics>();
        assert_eq!(mmv_results_get(serial, 6, &mut m), MmvStatus::OutOfRange);

        let dir = tempfile::tempdir().unwrap();
        let runs = dir.path().join("runs.csv");
        let summary = dir.path().join("summary.csv");
        let c_runs = CString::new(runs.to_str().unwrap()).unwrap();
        let c_sum = CString::new(summary.to_str().unwrap()).unwrap();
        assert_eq!(mmv_results_write_csv(serial, c_runs.as_ptr()), MmvStatus::Ok);
        assert_eq!(mmv_results_write_summary_csv(serial, c_sum.as_ptr()), MmvStatus::Ok);
        assert_eq!(std::fs::read_to_string(&runs).unwrap().lines().count(), 7);
        assert_eq!(std::fs::read_to_string(&summary).unwrap().lines().count(), 3);

        let bad = CString::new("/nonexistent/dir/x.csv").unwrap();
        assert_eq!(mmv_results_write_csv(serial, bad.as_ptr()), MmvStatus::Io);
        assert!(last_error().contains("/nonexistent/dir/x.csv"));

        mmv_results_free(serial);
        mmv_results_free(par);
        mmv_sweep_free(sweep);
    }
}

#[test]
fn errors_and_nulls() {
    let (s, sweep) = parse(&["--fc-ghz", "200"]);
    assert_eq!(s, MmvStatus::Config);
    assert!(sweep.is_null());
    assert!(last_error().contains("fc_ghz"));

    let (s, _) = parse(&["--no-such-flag"]);
    assert_eq!(s, MmvStatus::Config);

    unsafe {
        assert_eq!(mmv_config_new(ptr::null_mut()), MmvStatus::NullPointer);
        let mut m = std::mem::zeroed::<MmvRunMetrics>();
        assert_eq!(mmv_run_replication(ptr::null(), &mut m), MmvStatus::NullPointer);
        assert!(last_error().contains("cfg"));
        assert_eq!(mmv_sweep_len(ptr::null()), 0);
        assert_eq!(mmv_results_len(ptr::null()), 0);
        mmv_config_free(ptr::null_mut());
        mmv_sweep_free(ptr::null_mut());
        mmv_results_free(ptr::null_mut());
        mmv_string_free(ptr::null_mut());

        let invalid = [0xffu8, 0xfe, 0];
        let mut cfg = ptr::null_mut();
        assert_eq!(mmv_config_from_kv(invalid.as_ptr().cast(), &mut cfg), MmvStatus::InvalidUtf8);

        let overload = CString::new("ipi_ms = 0.1\nduration_s = 10\n").unwrap();
        assert_eq!(mmv_config_from_kv(overload.as_ptr(), &mut cfg), MmvStatus::Ok);
        assert_eq!(mmv_run_replication(cfg, &mut m), MmvStatus::Simulation);
        assert!(last_error().contains("queue"));
        mmv_config_free(cfg);
    }
}

#[test]
fn no_deliveries_report_nan() {
    let text = CString::new("mcs = 28\ntx_power_dbm = -80\nduration_s = 0.2\n").unwrap();
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(mmv_config_from_kv(text.as_ptr(), &mut cfg), MmvStatus::Ok);
        let mut m = std::mem::zeroed::<MmvRunMetrics>();
        assert_eq!(mmv_run_replication(cfg, &mut m), MmvStatus::Ok);
        mmv_config_free(cfg);
        assert_eq!(m.delivered, 0);
        assert!(m.mean_delay_ms.is_nan());
        assert!(m.p95_delay_ms.is_nan());
    }
}
