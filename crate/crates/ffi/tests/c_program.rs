//! Compiles and runs a small C program against the generated header and the
//! static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "mmwave_v2v.h"

int main(void) {
    const char *argv[] = {"--mcs", "0", "--distance-m", "100", "--runs", "2", "--duration-s", "0.2"};
    MmvSweep *sweep = NULL;
    if (mmv_sweep_parse("scenario = highway\n", argv, 8, &sweep) != MMV_STATUS_OK) {
        fprintf(stderr, "%s\n", mmv_last_error());
        return 1;
    }
    MmvResults *res = NULL;
    if (mmv_sweep_run(sweep, 0, &res) != MMV_STATUS_OK) return 2;
    for (size_t i = 0; i < mmv_results_len(res); i++) {
        MmvRunMetrics m;
        if (mmv_results_get(res, i, &m) != MMV_STATUS_OK) return 3;
        printf("%llu %llu %llu %.3f\n", (unsigned long long)m.run_id,
               (unsigned long long)m.sent, (unsigned long long)m.delivered, m.mean_delay_ms);
    }
    MmvConfig *cfg = NULL;
    if (mmv_config_from_kv("fc_ghz = 300\n", &cfg) != MMV_STATUS_CONFIG) return 4;
    printf("error: %s\n", mmv_last_error());
    mmv_results_free(res);
    mmv_sweep_free(sweep);
    printf("version %s\n", mmv_version());
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let target_dir = exe.parent().unwrap().parent().unwrap();
    let lib = target_dir.join("libmmwave_v2v_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Wextra", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .expect("run C compiler");
    assert!(status.success());

    let out = Command::new(&bin).output().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "0 200 200 0.500");
    assert_eq!(lines[1], "1 200 200 0.500");
    assert!(lines[2].starts_with("error: ") && lines[2].contains("fc_ghz"));
    assert_eq!(lines[3], concat!("version ", env!("CARGO_PKG_VERSION")));
}
