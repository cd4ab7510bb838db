//! C ABI over the simulator.
//!
//! Objects cross the boundary as opaque handles created and destroyed by
//! this library. Every fallible call returns a [`SlicesimStatus`]; the text
//! of the most recent error on the calling thread is available from
//! [`slicesim_last_error`]. Strings returned through out-parameters are
//! owned by the caller and must be released with [`slicesim_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use slicesim::e2;
use slicesim::report::{evaluate_all, Artifacts};
use slicesim::scenario::{Scenario, ScenarioError};
use slicesim::world::{run_scenario, RunOptions, RunOutput};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlicesimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidScenario = 4,
    SimulationError = 5,
    IoError = 6,
    NotFound = 7,
    DecodeError = 8,
    Panic = 9,
}

/// Which artifact to fetch from a finished run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlicesimArtifact {
    Metrics = 0,
    Anomalies = 1,
    Events = 2,
    Summary = 3,
}

/// A parsed and validated scenario.
pub struct SlicesimScenario(Scenario);

/// The outputs of one completed run.
pub struct SlicesimRun(RunOutput);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn fail(status: SlicesimStatus, msg: impl Into<String>) -> SlicesimStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into `Panic` so it never unwinds into C.
fn guard(f: impl FnOnce() -> SlicesimStatus) -> SlicesimStatus {
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(SlicesimStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, SlicesimStatus> {
    if p.is_null() {
        return Err(fail(SlicesimStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SlicesimStatus::InvalidUtf8, "argument is not UTF-8"))
}

fn give_string(s: String, out: *mut *mut c_char) -> SlicesimStatus {
    match CString::new(s) {
        Ok(c) => {
            // SAFETY: callers check `out` for null before reaching here.
            unsafe { *out = c.into_raw() };
            SlicesimStatus::Ok
        }
        Err(_) => fail(SlicesimStatus::InvalidUtf8, "output contains a nul byte"),
    }
}

fn scenario_status(e: ScenarioError) -> SlicesimStatus {
    let status = match &e {
        ScenarioError::Parse(_) => SlicesimStatus::ParseError,
        ScenarioError::Invalid(_) => SlicesimStatus::InvalidScenario,
        ScenarioError::Io { .. } => SlicesimStatus::IoError,
    };
    fail(status, e.to_string())
}

fn accept(sc: Scenario, out: *mut *mut SlicesimScenario) -> SlicesimStatus {
    if let Err(e) = sc.validate() {
        return scenario_status(e);
    }
    // SAFETY: checked non-null by the caller.
    unsafe { *out = Box::into_raw(Box::new(SlicesimScenario(sc))) };
    SlicesimStatus::Ok
}

/// Message of the last error on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn slicesim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn slicesim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse and validate a scenario from JSON text.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slicesim_scenario_from_json(
    json: *const c_char,
    out: *mut *mut SlicesimScenario,
) -> SlicesimStatus {
    guard(|| {
        if out.is_null() {
            return fail(SlicesimStatus::NullPointer, "out is null");
        }
        let text = match str_arg(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match Scenario::from_json(text) {
            Ok(sc) => accept(sc, out),
            Err(e) => scenario_status(e),
        }
    })
}

/// Load, parse and validate a scenario file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slicesim_scenario_load(
    path: *const c_char,
    out: *mut *mut SlicesimScenario,
) -> SlicesimStatus {
    guard(|| {
        if out.is_null() {
            return fail(SlicesimStatus::NullPointer, "out is null");
        }
        let p = match str_arg(path) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match Scenario::load(Path::new(p)) {
            Ok(sc) => accept(sc, out),
            Err(e) => scenario_status(e),
        }
    })
}

/// # Safety
/// `sc` must come from this library and not be used afterwards. Null is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn slicesim_scenario_free(sc: *mut SlicesimScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Run a scenario to completion. When `override_seed` is true, `seed`
/// replaces the scenario's seed.
///
/// # Safety
/// `sc` must be a live scenario handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slicesim_run(
    sc: *const SlicesimScenario,
    override_seed: bool,
    seed: u64,
    out: *mut *mut SlicesimRun,
) -> SlicesimStatus {
    guard(|| {
        if sc.is_null() || out.is_null() {
            return fail(SlicesimStatus::NullPointer, "null handle");
        }
        let opts = RunOptions {
            seed: override_seed.then_some(seed),
            trace: false,
        };
        match run_scenario(&(*sc).0, &opts) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(SlicesimRun(r)));
                SlicesimStatus::Ok
            }
            Err(e) => fail(SlicesimStatus::SimulationError, e.to_string()),
        }
    })
}

/// # Safety
/// `run` must come from this library and not be used afterwards. Null is
/// a no-op.
#[no_mangle]
pub unsafe extern "C" fn slicesim_run_free(run: *mut SlicesimRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Write all artifacts of a run into `dir`, creating it if needed.
///
/// # Safety
/// `run` must be a live handle and `dir` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn slicesim_run_write(run: *const SlicesimRun, dir: *const c_char) -> SlicesimStatus {
    guard(|| {
        if run.is_null() {
            return fail(SlicesimStatus::NullPointer, "null handle");
        }
        let d = match str_arg(dir) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match (*run).0.write_to(Path::new(d)) {
            Ok(()) => SlicesimStatus::Ok,
            Err(e) => fail(SlicesimStatus::IoError, format!("{d}: {e}")),
        }
    })
}

/// Copy one artifact's text into a new string owned by the caller.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slicesim_run_artifact(
    run: *const SlicesimRun,
    which: SlicesimArtifact,
    out: *mut *mut c_char,
) -> SlicesimStatus {
    guard(|| {
        if run.is_null() || out.is_null() {
            return fail(SlicesimStatus::NullPointer, "null handle");
        }
        let r = &(*run).0;
        let text = match which {
            SlicesimArtifact::Metrics => r.metrics_csv(),
            SlicesimArtifact::Anomalies => r.anomalies_csv(),
            SlicesimArtifact::Events => r.events_log(),
            SlicesimArtifact::Summary => r.summary_json(),
        };
        give_string(text, out)
    })
}

/// Mean throughput of a flow over its active metric intervals, in Mbps.
///
/// # Safety
/// `run` must be a live handle, `flow` a valid NUL-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slicesim_run_flow_mean_mbps(
    run: *const SlicesimRun,
    flow: *const c_char,
    out: *mut f64,
) -> SlicesimStatus {
    guard(|| {
        if run.is_null() || out.is_null() {
            return fail(SlicesimStatus::NullPointer, "null handle");
        }
        let f = match str_arg(flow) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match (*run).0.summary.flows.iter().find(|x| x.id == f) {
            Some(x) => {
                *out = x.throughput_mbps.mean;
                SlicesimStatus::Ok
            }
            None => fail(SlicesimStatus::NotFound, format!("no flow {f:?}")),
        }
    })
}

/// Number of anomalies the twin reported.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slicesim_run_anomaly_count(run: *const SlicesimRun, out: *mut usize) -> SlicesimStatus {
    guard(|| {
        if run.is_null() || out.is_null() {
            return fail(SlicesimStatus::NullPointer, "null handle");
        }
        *out = (*run).0.anomalies.len();
        SlicesimStatus::Ok
    })
}

/// Evaluate the scenario's criteria. `passed` and `total` receive counts;
/// `report`, if not null, receives one line per criterion.
///
/// # Safety
/// `run` must be a live handle; `passed` and `total` valid pointers;
/// `report` null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slicesim_run_check(
    run: *const SlicesimRun,
    passed: *mut usize,
    total: *mut usize,
    report: *mut *mut c_char,
) -> SlicesimStatus {
    guard(|| {
        if run.is_null() || passed.is_null() || total.is_null() {
            return fail(SlicesimStatus::NullPointer, "null handle");
        }
        let results = evaluate_all(&Artifacts::from_output(&(*run).0));
        *passed = results.iter().filter(|r| r.pass).count();
        *total = results.len();
        if report.is_null() {
            return SlicesimStatus::Ok;
        }
        let lines: Vec<String> = results.iter().map(|r| r.to_string()).collect();
        give_string(lines.join("\n"), report)
    })
}

/// Decode one E2 wire message and describe it as JSON.
///
/// # Safety
/// `bytes` must point to `len` readable bytes (or be null with `len` 0)
/// and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slicesim_e2_decode_json(
    bytes: *const u8,
    len: usize,
    out: *mut *mut c_char,
) -> SlicesimStatus {
    guard(|| {
        if out.is_null() || (bytes.is_null() && len > 0) {
            return fail(SlicesimStatus::NullPointer, "null buffer");
        }
        let buf: &[u8] = if len == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(bytes, len)
        };
        match e2::decode(buf) {
            Ok(m) => give_string(serde_json::to_string(&m).expect("message serializes"), out),
            Err(e) => fail(SlicesimStatus::DecodeError, e.to_string()),
        }
    })
}

/// Release a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn slicesim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
