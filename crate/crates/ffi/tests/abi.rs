use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use pileup_ffi::*;

fn last_error() -> String {
    let p = pileup_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn simulate_and_estimate_round_trip() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(pileup_model_bimodal(&mut model), PileupStatus::Ok);
        let mut cycles = ptr::null_mut();
        assert_eq!(pileup_simulate(model, 0.04, 3000, 7, &mut cycles), PileupStatus::Ok);
        assert_eq!(pileup_cycles_len(cycles), 3000);

        let mut config = pileup_estimator_config_default();
        config.h = 8.0;
        config.omega_max = 300.0;
        config.y_min = 0.0;
        config.y_max = 200.0;
        config.y_count = 201;
        let mut est = ptr::null_mut();
        assert_eq!(pileup_estimate(cycles, &config, &mut est), PileupStatus::Ok, "{}", last_error());
        assert_eq!(pileup_estimate_len(est), 201);
        assert!((pileup_estimate_lambda_hat(est) - 0.04).abs() < 0.004);

        let (mut y, mut m) = (vec![0.0; 201], vec![0.0; 201]);
        assert_eq!(pileup_estimate_copy(est, y.as_mut_ptr(), m.as_mut_ptr(), 201), 201);
        let mass: f64 = m.windows(2).zip(y.windows(2)).map(|(f, v)| 0.5 * (f[0] + f[1]) * (v[1] - v[0])).sum();
        assert!((mass - 1.0).abs() < 0.05, "mass {mass}");

        pileup_estimate_free(est);
        pileup_cycles_free(cycles);
        pileup_model_free(model);
    }
}

#[test]
fn arrays_in_and_out() {
    let idle = [1.0, 2.0, 3.0];
    let duration = [0.5, 0.25, 4.0];
    let energy = [10.0, 20.0, 30.0];
    unsafe {
        let mut cycles = ptr::null_mut();
        assert_eq!(
            pileup_cycles_new(idle.as_ptr(), duration.as_ptr(), energy.as_ptr(), 3, &mut cycles),
            PileupStatus::Ok
        );
        let (mut i, mut d, mut e) = ([0.0; 3], [0.0; 3], [0.0; 3]);
        assert_eq!(pileup_cycles_copy(cycles, i.as_mut_ptr(), d.as_mut_ptr(), e.as_mut_ptr(), 3), 3);
        assert_eq!((i, d, e), (idle, duration, energy));
        pileup_cycles_free(cycles);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let bad = [1.0, -2.0];
        let ok = [1.0, 1.0];
        let mut cycles = ptr::null_mut();
        assert_eq!(pileup_cycles_new(bad.as_ptr(), ok.as_ptr(), ok.as_ptr(), 2, &mut cycles), PileupStatus::Data);
        assert!(cycles.is_null());
        assert!(last_error().contains("positive"));

        let mut model = ptr::null_mut();
        assert_eq!(pileup_model_mg_exponential(-1.0, &mut model), PileupStatus::Config);
        assert_eq!(pileup_model_bimodal(ptr::null_mut()), PileupStatus::NullPointer);
        assert_eq!(pileup_cycles_len(ptr::null()), 0);
        assert!(pileup_estimate_lambda_hat(ptr::null()).is_nan());

        assert_eq!(pileup_model_bimodal(&mut model), PileupStatus::Ok);
        assert!(pileup_last_error().is_null());
        let mut cycles = ptr::null_mut();
        assert_eq!(pileup_simulate(model, 0.04, 200, 1, &mut cycles), PileupStatus::Ok);
        let mut config = pileup_estimator_config_default();
        config.h = 8.0;
        config.omega_max = 300.0;
        config.denominator_floor = 0.9;
        let mut est = ptr::null_mut();
        assert_eq!(pileup_estimate(cycles, &config, &mut est), PileupStatus::Numerical);
        assert!(est.is_null());
        pileup_cycles_free(cycles);
        pileup_model_free(model);
    }
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(pileup_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/pileup.h")
}

#[test]
fn header_declares_every_entry_point() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "pileup_version",
        "pileup_last_error",
        "pileup_model_bimodal",
        "pileup_model_conditional_gamma",
        "pileup_model_mg_exponential",
        "pileup_model_free",
        "pileup_simulate",
        "pileup_cycles_new",
        "pileup_cycles_len",
        "pileup_cycles_copy",
        "pileup_cycles_free",
        "pileup_estimator_config_default",
        "pileup_estimate",
        "pileup_estimate_len",
        "pileup_estimate_lambda_hat",
        "pileup_estimate_copy",
        "pileup_estimate_free",
    ] {
        assert!(text.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(text.contains("typedef struct PileupModel PileupModel;"));
}

#[test]
fn c_program_links_against_the_static_library() {
    let Ok(exe) = std::env::current_exe() else { return };
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    let lib = ["libpileup_ffi.a", "deps/libpileup_ffi.a"].iter().map(|p| profile_dir.join(p)).find(|p| p.exists());
    let (Some(lib), Ok(_)) = (lib, Command::new("cc").arg("--version").output()) else {
        eprintln!("skipping: no C compiler or static library");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "pileup.h"
int main(void) {
    PileupModel *model = NULL;
    PileupCycles *cycles = NULL;
    if (pileup_model_bimodal(&model) != PILEUP_STATUS_OK) return 1;
    if (pileup_simulate(model, 0.04, 100, 3, &cycles) != PILEUP_STATUS_OK) return 2;
    printf("%zu\n", pileup_cycles_len(cycles));
    pileup_cycles_free(cycles);
    pileup_model_free(model);
    return pileup_model_bimodal(NULL) == PILEUP_STATUS_NULL_POINTER ? 0 : 3;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "100");
}
