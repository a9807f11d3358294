//! Compiles and runs a C program against the generated header and the
//! static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "levelconf.h"

int main(void) {
    const double beta[2] = {3.124, 2.128};
    const double cov[4] = {0.1122, 0.0679, 0.0679, 0.0490};
    const double lo[1] = {-2.30}, hi[1] = {-0.05};
    LcFit *fit = NULL;
    LcConstant *c = NULL;
    LcLevelSet *set = NULL;
    if (lc_fit_from_covariance(beta, cov, 2, &fit) != LC_STATUS_OK) return 1;
    if (lc_constant_fixed(2.14, lo, hi, 1, LC_SIDE_UPPER, LC_SHAPE_HYPERBOLIC, 0.05, &c) != LC_STATUS_OK) return 2;
    if (lc_level_set(fit, c, 0.0, LC_SET_KIND_G1U, 0, &set) != LC_STATUS_OK) return 3;
    size_t n = 0;
    double a = 0, b = 0;
    if (lc_level_set_interval_count(set, &n) != LC_STATUS_OK || n != 1) return 4;
    if (lc_level_set_interval(set, 0, &a, &b) != LC_STATUS_OK) return 5;
    if (fabs(a + 1.61) > 0.01) return 6;
    if (lc_level_set(fit, c, 0.0, LC_SET_KIND_G2U, 0, &set) != LC_STATUS_KIND_MISMATCH) return 7;
    if (lc_last_error_message() == NULL) return 8;
    printf("%.4f %.4f\n", a, b);
    lc_level_set_free(set);
    lc_constant_free(c);
    lc_fit_free(fit);
    return 0;
}
"#;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// `target/<profile>`, from the location of this test binary.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().expect("test binary path");
    exe.parent().and_then(Path::parent).expect("target/<profile>/deps").to_path_buf()
}

#[test]
fn header_is_generated() {
    let header = std::fs::read_to_string(crate_dir().join("include/levelconf.h")).expect("header exists");
    for symbol in ["lc_fit_ols", "lc_critical_constant", "lc_level_set_contains", "lc_last_error_message", "LC_STATUS_OK"] {
        assert!(header.contains(symbol), "{symbol} missing from header");
    }
}

#[test]
fn c_program_links_and_runs() {
    let dir = tempfile::tempdir().expect("temp dir");
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).expect("write source");
    let archive = profile_dir().join("liblevelconf_ffi.a");
    assert!(archive.exists(), "static library not found at {}", archive.display());
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&src)
        .arg(&archive)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler runs");
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().expect("smoke binary runs");
    assert!(out.status.success(), "smoke program exited with {:?}", out.status.code());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.trim().ends_with("-0.0500"), "{text}");
}
