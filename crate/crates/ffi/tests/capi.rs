use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use serde_json::Value;

use reconcell_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    rc_string_free(p);
    s
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(rc_last_error()).to_str().unwrap().to_string() }
}

fn demo(prepare: bool) -> *mut RcCell {
    let mut cell = ptr::null_mut();
    assert_eq!(unsafe { rc_cell_new(ptr::null(), prepare, &mut cell) }, RcStatus::Ok);
    assert!(!cell.is_null());
    cell
}

#[test]
fn prepared_demo_runs_to_success() {
    let cell = demo(true);
    let mut report = ptr::null_mut();
    let status = unsafe { rc_cell_run(cell, c("demo_screw").as_ptr(), 300.0, &mut report) };
    assert_eq!(status, RcStatus::Ok, "{}", last_error());
    let report: Value = serde_json::from_str(&unsafe { take(report) }).unwrap();
    assert_eq!(report["final_outcome"], "END_SUCCESS");

    let mut events = ptr::null_mut();
    assert_eq!(unsafe { rc_cell_events(cell, 0, &mut events) }, RcStatus::Ok);
    let events: Vec<Value> = serde_json::from_str(&unsafe { take(events) }).unwrap();
    assert!(events.iter().any(|e| e["kind"] == "RUN_FINISHED"));
    unsafe { rc_cell_free(cell) };
}

#[test]
fn commands_report_pending_then_result() {
    let cell = demo(false);
    let mut cmd = 0;
    let params = c(r#"{"skill": "to_rack"}"#);
    let s = unsafe { rc_cell_command(cell, c("r1").as_ptr(), c("run_skill").as_ptr(), params.as_ptr(), &mut cmd) };
    assert_eq!(s, RcStatus::Ok);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { rc_cell_command_result(cell, cmd, &mut out) }, RcStatus::Pending);
    assert!(out.is_null());
    assert_eq!(unsafe { rc_cell_advance(cell, 10.0) }, RcStatus::Ok);
    assert_eq!(unsafe { rc_cell_command_result(cell, cmd, &mut out) }, RcStatus::Ok);
    let res: Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert_eq!(res["outcome"], "SUCCEEDED");
    let mut now = 0.0;
    assert_eq!(unsafe { rc_cell_step(cell, 50) }, RcStatus::Ok);
    assert_eq!(unsafe { rc_cell_now(cell, &mut now) }, RcStatus::Ok);
    assert!((now - 10.5).abs() < 1e-9, "{now}");
    unsafe { rc_cell_free(cell) };
}

#[test]
fn errors_map_to_status_codes() {
    let cell = demo(false);
    let mut cmd = 0;
    let s = unsafe { rc_cell_command(cell, c("ghost").as_ptr(), c("get_state").as_ptr(), ptr::null(), &mut cmd) };
    assert_eq!(s, RcStatus::NotFound);
    assert!(last_error().starts_with("UnknownModule"), "{}", last_error());
    let s = unsafe { rc_cell_command(cell, c("r1").as_ptr(), c("get_state").as_ptr(), c("{").as_ptr(), &mut cmd) };
    assert_eq!(s, RcStatus::InvalidJson);
    let s = unsafe { rc_cell_command(cell, c("r1").as_ptr(), c("fly").as_ptr(), ptr::null(), &mut cmd) };
    assert_eq!(s, RcStatus::Rejected);
    let s = unsafe { rc_cell_command(cell, ptr::null(), c("fly").as_ptr(), ptr::null(), &mut cmd) };
    assert_eq!(s, RcStatus::NullArgument);
    let s = unsafe { rc_cell_command(cell, c("r1").as_ptr(), c("get_state").as_ptr(), ptr::null(), ptr::null_mut()) };
    assert_eq!(s, RcStatus::NullArgument);
    assert_eq!(unsafe { rc_cell_advance(cell, f64::NAN) }, RcStatus::Rejected);
    assert_eq!(unsafe { rc_cell_step(ptr::null_mut(), 1) }, RcStatus::NullArgument);

    let bad = [0xffu8, 0];
    let s = unsafe { rc_cell_command(cell, bad.as_ptr().cast(), c("x").as_ptr(), ptr::null(), &mut cmd) };
    assert_eq!(s, RcStatus::InvalidUtf8);

    let mut name = ptr::null_mut();
    let broken = c("sequence broken {\n  state a: skill \"nope\" on r1;\n}");
    assert_eq!(unsafe { rc_cell_compile(cell, broken.as_ptr(), ptr::null(), &mut name) }, RcStatus::Ok);
    assert_eq!(unsafe { take(name) }, "broken");
    let mut report = ptr::null_mut();
    let s = unsafe { rc_cell_run(cell, c("broken").as_ptr(), 10.0, &mut report) };
    assert_eq!(s, RcStatus::Conflict, "{}", last_error());
    assert!(report.is_null());
    let mut findings = ptr::null_mut();
    assert_eq!(unsafe { rc_cell_validate(cell, c("broken").as_ptr(), &mut findings) }, RcStatus::Ok);
    let findings: Value = serde_json::from_str(&unsafe { take(findings) }).unwrap();
    assert!(!findings["findings"].as_array().unwrap().is_empty());
    let s = unsafe { rc_cell_compile(cell, c("sequence {").as_ptr(), ptr::null(), &mut name) };
    assert_eq!(s, RcStatus::Rejected);
    unsafe { rc_cell_free(cell) };
}

#[test]
fn scenario_documents_are_checked() {
    let mut cell = ptr::null_mut();
    let s = unsafe { rc_cell_new(c(r#"{"name": "x", "bogus": 1}"#).as_ptr(), false, &mut cell) };
    assert_eq!(s, RcStatus::Scenario);
    assert!(cell.is_null());
    let s = unsafe { rc_cell_new(c(r#"{"name": "empty", "modules": []}"#).as_ptr(), false, &mut cell) };
    assert_eq!(s, RcStatus::Ok, "{}", last_error());
    let mut snap = ptr::null_mut();
    assert_eq!(unsafe { rc_cell_snapshot(cell, &mut snap) }, RcStatus::Ok);
    assert_eq!(unsafe { take(snap) }, "[]");
    unsafe {
        rc_cell_free(cell);
        rc_cell_free(ptr::null_mut());
        rc_string_free(ptr::null_mut());
    }
}

#[test]
fn header_is_current() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/reconcell.h")).unwrap();
    for f in ["rc_cell_new", "rc_cell_run", "rc_cell_events", "rc_string_free", "RC_STATUS_PENDING"] {
        assert!(header.contains(f), "{f} missing from header");
    }
}

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = target_dir().join("libreconcell_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let status = Command::new("cc")
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(root.join("include"))
        .arg(root.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with(env!("CARGO_PKG_VERSION")), "{text}");
}
