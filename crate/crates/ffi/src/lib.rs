//! C interface to a simulated workcell.
//!
//! A cell is an opaque `RcCell` handle. Every call returns an `RcStatus`;
//! on anything but `RC_STATUS_OK` the message is available from
//! `rc_last_error` on the same thread. Documents cross the boundary as
//! UTF-8 JSON. Strings handed out by the library are freed with
//! `rc_string_free`.
//!
//! The clock only moves when the caller steps it.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use serde_json::Value;

use reconcell::cell::{Cell, CellError};
use reconcell::scenario::{prepare, run_to_end, Scenario, ScenarioError};
use reconcell::skills::SkillStore;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    /// Scenario failed to load or bring up.
    Scenario = 4,
    /// Unknown module, skill, sequence, run or command.
    NotFound = 5,
    /// Name taken, robot busy, sequence not runnable.
    Conflict = 6,
    /// Any other request the cell refused.
    Rejected = 7,
    /// The command has not finished yet.
    Pending = 8,
    /// A run ended somewhere other than END_SUCCESS, or timed out.
    RunFailed = 9,
    Storage = 10,
    Panic = 99,
}

/// Opaque cell handle.
pub struct RcCell {
    cell: Cell,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

struct Fail(RcStatus, String);

fn status_for(code: &str) -> RcStatus {
    match code {
        "UnknownModule" | "UnknownSkill" | "UnknownVersion" | "UnknownSequence" | "UnknownRun"
        | "UnknownCommand" | "UnknownSession" => RcStatus::NotFound,
        "NameConflict" | "SkillInUse" | "ValidationFailed" | "RunConflict" | "ModuleOffline"
        | "AlreadyRecording" => RcStatus::Conflict,
        "StorageError" | "CorruptStore" => RcStatus::Storage,
        _ => RcStatus::Rejected,
    }
}

impl From<CellError> for Fail {
    fn from(e: CellError) -> Self {
        Fail(status_for(e.code()), format!("{}: {e}", e.code()))
    }
}

impl From<ScenarioError> for Fail {
    fn from(e: ScenarioError) -> Self {
        let status = match &e {
            ScenarioError::RunFailed { .. } | ScenarioError::Timeout { .. } => RcStatus::RunFailed,
            ScenarioError::Cell { source, .. } => status_for(source.code()),
            _ => RcStatus::Scenario,
        };
        Fail(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RcStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RcStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(RcStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(RcStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn json_arg(p: *const c_char, what: &str) -> Result<Value, Fail> {
    if p.is_null() {
        return Ok(Value::Object(Default::default()));
    }
    serde_json::from_str(text(p, what)?).map_err(|e| Fail(RcStatus::InvalidJson, format!("{what}: {e}")))
}

unsafe fn handle<'a>(cell: *mut RcCell) -> Result<&'a mut Cell, Fail> {
    cell.as_mut()
        .map(|h| &mut h.cell)
        .ok_or_else(|| Fail(RcStatus::NullArgument, "cell is null".into()))
}

unsafe fn out_ptr<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(RcStatus::NullArgument, "output pointer is null".into()))
}

fn into_c(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

unsafe fn put_json(out: *mut *mut c_char, v: &impl serde::Serialize) -> Result<(), Fail> {
    *out_ptr(out)? = into_c(serde_json::to_string(v).expect("documents serialize"));
    Ok(())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn rc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn rc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a cell from a scenario document. With `prepare` set, the
/// scenario's teach steps are played and its run sequence compiled.
/// `scenario_json` may be null for the built-in demo.
#[no_mangle]
pub unsafe extern "C" fn rc_cell_new(scenario_json: *const c_char, prepare_cell: bool, out: *mut *mut RcCell) -> RcStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let scenario = if scenario_json.is_null() {
            Scenario::demo()
        } else {
            Scenario::from_json(text(scenario_json, "scenario")?, None)?
        };
        let cell = if prepare_cell {
            prepare(&scenario, SkillStore::in_memory(), &mut |_| {})?.cell
        } else {
            scenario.bring_up(SkillStore::in_memory())?
        };
        *out = Box::into_raw(Box::new(RcCell { cell }));
        Ok(())
    })
}

/// Frees a cell. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rc_cell_free(cell: *mut RcCell) {
    if !cell.is_null() {
        drop(Box::from_raw(cell));
    }
}

#[no_mangle]
pub unsafe extern "C" fn rc_cell_step(cell: *mut RcCell, ticks: u64) -> RcStatus {
    guard(|| {
        let c = handle(cell)?;
        for _ in 0..ticks {
            c.step();
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rc_cell_advance(cell: *mut RcCell, seconds: f64) -> RcStatus {
    guard(|| {
        if !(seconds.is_finite() && seconds >= 0.0) {
            return Err(Fail(RcStatus::Rejected, "seconds must be finite and non-negative".into()));
        }
        handle(cell)?.advance(seconds);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rc_cell_now(cell: *mut RcCell, out: *mut f64) -> RcStatus {
    guard(|| {
        *out_ptr(out)? = handle(cell)?.now();
        Ok(())
    })
}

/// Module records as a JSON array.
#[no_mangle]
pub unsafe extern "C" fn rc_cell_snapshot(cell: *mut RcCell, out: *mut *mut c_char) -> RcStatus {
    guard(|| put_json(out, &handle(cell)?.snapshot()))
}

/// Dispatches `verb` to a module by name or id. `params_json` may be null
/// for no parameters.
#[no_mangle]
pub unsafe extern "C" fn rc_cell_command(
    cell: *mut RcCell,
    module: *const c_char,
    verb: *const c_char,
    params_json: *const c_char,
    cmd_out: *mut u64,
) -> RcStatus {
    guard(|| {
        let c = handle(cell)?;
        let module = text(module, "module")?;
        let verb = text(verb, "verb")?;
        let params = json_arg(params_json, "params")?;
        let out = out_ptr(cmd_out)?;
        *out = c.command(module, verb, params)?;
        Ok(())
    })
}

/// Result document of a finished command; `RC_STATUS_PENDING` while it
/// runs.
#[no_mangle]
pub unsafe extern "C" fn rc_cell_command_result(cell: *mut RcCell, cmd: u64, out: *mut *mut c_char) -> RcStatus {
    guard(|| {
        let c = handle(cell)?;
        match c.command_result(cmd) {
            Some(r) => put_json(out, r),
            None => Err(Fail(RcStatus::Pending, format!("command {cmd} has not finished"))),
        }
    })
}

/// Compiles sequence source. `args_json` is an object of string values,
/// or null. Writes the sequence name.
#[no_mangle]
pub unsafe extern "C" fn rc_cell_compile(
    cell: *mut RcCell,
    source: *const c_char,
    args_json: *const c_char,
    name_out: *mut *mut c_char,
) -> RcStatus {
    guard(|| {
        let c = handle(cell)?;
        let source = text(source, "source")?;
        let args: BTreeMap<String, String> = serde_json::from_value(json_arg(args_json, "args")?)
            .map_err(|e| Fail(RcStatus::InvalidJson, format!("args: {e}")))?;
        let out = out_ptr(name_out)?;
        let name = c.compile_sequence(source, &args)?.name.clone();
        *out = into_c(name);
        Ok(())
    })
}

/// Validation report of a loaded sequence as JSON.
#[no_mangle]
pub unsafe extern "C" fn rc_cell_validate(cell: *mut RcCell, name: *const c_char, out: *mut *mut c_char) -> RcStatus {
    guard(|| {
        let c = handle(cell)?;
        let report = c.validate_sequence(text(name, "name")?)?;
        put_json(out, &report)
    })
}

/// Runs a loaded sequence to its end, stepping the clock for at most
/// `max_seconds`. The report is written whenever the run reaches an end,
/// including END_FAILURE.
#[no_mangle]
pub unsafe extern "C" fn rc_cell_run(
    cell: *mut RcCell,
    name: *const c_char,
    max_seconds: f64,
    report_out: *mut *mut c_char,
) -> RcStatus {
    guard(|| {
        let c = handle(cell)?;
        let name = text(name, "name")?;
        let out = out_ptr(report_out)?;
        *out = ptr::null_mut();
        let report = run_to_end(c, name, max_seconds, &mut |_| {})?;
        *out = into_c(serde_json::to_string(&report).expect("reports serialize"));
        match report.final_outcome.as_deref() {
            Some(reconcell::assembler::END_SUCCESS) => Ok(()),
            other => Err(Fail(RcStatus::RunFailed, format!("run ended in {}", other.unwrap_or("nothing")))),
        }
    })
}

/// Events with `seq >= from_seq` as a JSON array.
#[no_mangle]
pub unsafe extern "C" fn rc_cell_events(cell: *mut RcCell, from_seq: u64, out: *mut *mut c_char) -> RcStatus {
    guard(|| put_json(out, &handle(cell)?.registry().events_since(from_seq)))
}

/// Frees a string returned by this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
