use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use slicesim_ffi::*;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(format!("{name}.json"))
}

fn last_error() -> String {
    let p = slicesim_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take(s: *mut c_char) -> String {
    let t = CStr::from_ptr(s).to_string_lossy().into_owned();
    slicesim_string_free(s);
    t
}

fn load(name: &str) -> *mut SlicesimScenario {
    let p = CString::new(scenario_path(name).to_str().unwrap()).unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { slicesim_scenario_load(p.as_ptr(), &mut sc) }, SlicesimStatus::Ok);
    sc
}

#[test]
fn run_and_query_through_handles() {
    let sc = load("fig5_dl_centric");
    let mut run = ptr::null_mut();
    unsafe {
        assert_eq!(slicesim_run(sc, false, 0, &mut run), SlicesimStatus::Ok);
        let mut mbps = 0.0;
        let flow = CString::new("dl").unwrap();
        assert_eq!(slicesim_run_flow_mean_mbps(run, flow.as_ptr(), &mut mbps), SlicesimStatus::Ok);
        assert!((mbps - 240.0).abs() < 1e-6);

        let (mut passed, mut total) = (0usize, 0usize);
        let mut report = ptr::null_mut();
        assert_eq!(slicesim_run_check(run, &mut passed, &mut total, &mut report), SlicesimStatus::Ok);
        assert_eq!((passed, total), (2, 2));
        assert!(take(report).contains("PASS"));

        let mut s = ptr::null_mut();
        assert_eq!(slicesim_run_artifact(run, SlicesimArtifact::Summary, &mut s), SlicesimStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(s)).unwrap();
        assert_eq!(v["seed"], 1);

        let mut n = 99usize;
        assert_eq!(slicesim_run_anomaly_count(run, &mut n), SlicesimStatus::Ok);
        assert_eq!(n, 0);

        let dir = tempfile::tempdir().unwrap();
        let d = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(slicesim_run_write(run, d.as_ptr()), SlicesimStatus::Ok);
        assert!(dir.path().join("summary.json").is_file());

        slicesim_run_free(run);
        slicesim_scenario_free(sc);
    }
}

#[test]
fn seed_override_is_applied() {
    let sc = load("fig6_latency");
    let mut run = ptr::null_mut();
    unsafe {
        assert_eq!(slicesim_run(sc, true, 42, &mut run), SlicesimStatus::Ok);
        let mut s = ptr::null_mut();
        slicesim_run_artifact(run, SlicesimArtifact::Summary, &mut s);
        assert!(take(s).contains("\"seed\": 42"));
        slicesim_run_free(run);
        slicesim_scenario_free(sc);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut sc = ptr::null_mut();
    unsafe {
        let bad = CString::new("{not json").unwrap();
        assert_eq!(slicesim_scenario_from_json(bad.as_ptr(), &mut sc), SlicesimStatus::ParseError);
        assert!(last_error().contains("parse error"));

        let invalid = CString::new(r#"{"meta": {"name": "x", "duration_us": 0}, "topology": {"nodes": []}}"#).unwrap();
        assert_eq!(
            slicesim_scenario_from_json(invalid.as_ptr(), &mut sc),
            SlicesimStatus::InvalidScenario
        );
        assert!(last_error().contains("duration_us"));

        assert_eq!(slicesim_scenario_from_json(ptr::null(), &mut sc), SlicesimStatus::NullPointer);
        let missing = CString::new("/nonexistent/x.json").unwrap();
        assert_eq!(slicesim_scenario_load(missing.as_ptr(), &mut sc), SlicesimStatus::IoError);
        assert!(sc.is_null());

        let mut out = ptr::null_mut();
        assert_eq!(slicesim_run(ptr::null(), false, 0, &mut out), SlicesimStatus::NullPointer);
        slicesim_scenario_free(ptr::null_mut());
        slicesim_run_free(ptr::null_mut());
        slicesim_string_free(ptr::null_mut());
    }
}

#[test]
fn e2_decode_json() {
    let bytes = [0x01u8, 0x01, 0, 0, 0, 1, 0, 0, 0, 0];
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(slicesim_e2_decode_json(bytes.as_ptr(), bytes.len(), &mut s), SlicesimStatus::Ok);
        assert!(take(s).contains("SetupRequest"));
        assert_eq!(slicesim_e2_decode_json(bytes.as_ptr(), 3, &mut s), SlicesimStatus::DecodeError);
        assert_eq!(slicesim_e2_decode_json(ptr::null(), 0, &mut s), SlicesimStatus::DecodeError);
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(slicesim_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/slicesim.h")).unwrap();
    let src = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|r| r.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 12);
    for f in exports {
        assert!(h.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(h.contains("typedef struct SlicesimRun SlicesimRun;"));
}

/// Builds the C smoke program against the generated header and the static
/// library. Skipped when no C compiler or static library is available.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libslicesim_ffi.a");
    if !lib.is_file() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no cc or {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c_smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).arg(scenario_path("fig5_dl_centric")).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}{}", String::from_utf8_lossy(&out.stderr));
    assert!(text.contains("dl=240.00 passed=2 total=2 header=1 missing=7"), "{text}");
}
