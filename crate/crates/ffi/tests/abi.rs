use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use srl_ffi::*;

fn last_error() -> String {
    let p = srl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn bubble_form_through_handles() {
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { srl_form_catalog(c("bubble").as_ptr(), &mut f) }, SrlStatus::Ok);
    let x = [0.3, -0.2, 0.5];
    let mut coeff = 0.0;
    assert_eq!(unsafe { srl_form_volume_coefficient(f, x.as_ptr(), 3, &mut coeff) }, SrlStatus::Ok);
    let (r2, z) = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2], x[2]);
    assert!((coeff - (4.0 * z * z + (1.0 + r2) * (1.0 + r2))).abs() < 1e-12);
    let mut r = [0.0; 3];
    assert_eq!(unsafe { srl_form_reeb(f, x.as_ptr(), 3, r.as_mut_ptr()) }, SrlStatus::Ok);
    let want = srl::constructions::bubble_reeb_closed_form(&x);
    for i in 0..3 {
        assert!((r[i] - want[i]).abs() < 1e-12);
    }
    let mut kind = SrlOrbitKind::Unresolved;
    let axis = [0.0, 0.0, 0.5];
    assert_eq!(unsafe { srl_form_classify(f, axis.as_ptr(), 3, 100.0, &mut kind) }, SrlStatus::Ok);
    assert_eq!(kind, SrlOrbitKind::SingularPeriodic);
    unsafe { srl_form_free(f) };
}

#[test]
fn errors_map_to_codes_and_messages() {
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { srl_form_catalog(ptr::null(), &mut f) }, SrlStatus::NullPointer);
    assert!(last_error().contains("name"));
    assert_eq!(unsafe { srl_form_catalog(c("torus").as_ptr(), &mut f) }, SrlStatus::Config);
    assert!(f.is_null());
    let bad = [0xffu8, 0];
    assert_eq!(unsafe { srl_form_catalog(bad.as_ptr().cast(), &mut f) }, SrlStatus::InvalidUtf8);

    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { srl_config_from_json(c(r#"{"eps": 2.0}"#).as_ptr(), &mut cfg) }, SrlStatus::Config);
    assert!(cfg.is_null());
    assert_eq!(unsafe { srl_config_from_json(c(r#"{"bogus": 1}"#).as_ptr(), &mut cfg) }, SrlStatus::Config);
    assert!(last_error().contains("bogus"));

    let mut rep = ptr::null_mut();
    assert_eq!(unsafe { srl_run(c("nonsense").as_ptr(), ptr::null(), &mut rep) }, SrlStatus::Config);
    let cfg = srl_config_new();
    assert_eq!(unsafe { srl_config_set_eps(cfg, 0.5) }, SrlStatus::Ok);
    assert_eq!(unsafe { srl_run(c("foliation").as_ptr(), cfg, &mut rep) }, SrlStatus::Config);
    assert!(rep.is_null());
    unsafe { srl_config_free(cfg) };

    // Points of the wrong length are dimension errors.
    assert_eq!(unsafe { srl_form_catalog(c("darboux").as_ptr(), &mut f) }, SrlStatus::Ok);
    let mut coeff = 0.0;
    let x = [1.0, 2.0];
    assert_eq!(unsafe { srl_form_volume_coefficient(f, x.as_ptr(), 2, &mut coeff) }, SrlStatus::Dimension);
    assert_eq!(unsafe { srl_form_volume_coefficient(f, ptr::null(), 3, &mut coeff) }, SrlStatus::NullPointer);
    unsafe { srl_form_free(f) };
}

#[test]
fn reports_match_the_library() {
    let cfg = srl_config_new();
    assert_eq!(unsafe { srl_config_set_seed(cfg, 7) }, SrlStatus::Ok);
    let mut rep = ptr::null_mut();
    assert_eq!(unsafe { srl_run(c("break-scaling").as_ptr(), cfg, &mut rep) }, SrlStatus::Ok);
    assert!(unsafe { srl_report_pass(rep) });
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { srl_report_json(rep, &mut json) }, SrlStatus::Ok);
    let via_ffi = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    let direct = srl::cli::run(
        srl::cli::Experiment::BreakScaling,
        &srl::cli::ExperimentConfig { seed: 7, ..Default::default() },
    )
    .unwrap()
    .to_json();
    assert_eq!(via_ffi, direct);

    let n = unsafe { srl_report_check_count(rep) };
    assert!(n > 0);
    let mut chk = SrlCheck { measured: 0.0, expected: 0.0, tolerance: 0.0, pass: false };
    assert_eq!(unsafe { srl_report_check(rep, n, &mut chk) }, SrlStatus::OutOfRange);
    assert!(unsafe { srl_report_check_name(rep, n) }.is_null());
    assert_eq!(unsafe { srl_report_check(rep, 0, &mut chk) }, SrlStatus::Ok);
    assert!(chk.pass);

    let mut cj = ptr::null_mut();
    assert_eq!(unsafe { srl_config_to_json(cfg, &mut cj) }, SrlStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { srl_config_from_json(cj, &mut back) }, SrlStatus::Ok);
    unsafe {
        srl_string_free(cj);
        srl_string_free(json);
        srl_config_free(back);
        srl_config_free(cfg);
        srl_report_free(rep);
        srl_report_free(ptr::null_mut());
    }
}

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps/
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir();
    assert!(lib.join("libsrl_ffi.so").is_file() || lib.join("libsrl_ffi.a").is_file(), "no built library in {lib:?}");
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-L")
        .arg(&lib)
        .arg(format!("-Wl,-rpath,{}", lib.display()))
        .args(["-lsrl_ffi", "-lm", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .status()
        .expect("spawn cc");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
