//! C ABI for the agentic runtime.
//!
//! Other languages bind against `include/agentic.h` (generated by
//! cbindgen at build time). The surface follows C conventions: opaque
//! handles, integer status codes, `agentic_last_error` for the message of
//! the most recent failure on the calling thread, and explicit free
//! functions for every returned allocation.

use agentic_core::blueprint::{
    parse_blueprint, serialize_blueprint, validate_payload, Blueprint, SchemaNode,
};
use agentic_core::harness::{cmd_run, cmd_validate, HarnessError, RunConfig};
use libc::c_char;
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::Path;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgenticStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The document is malformed or violates the blueprint schema.
    ParseError = 3,
    /// Inputs were well-formed but failed validation.
    ValidationError = 4,
    /// Filesystem failure.
    IoError = 5,
    /// Unexpected internal failure.
    InternalError = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: AgenticStatus, message: &str) -> AgenticStatus {
    set_error(message);
    status
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn agentic_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Crate version as a static string; never freed.
#[no_mangle]
pub extern "C" fn agentic_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Free a string returned by this library. Null is accepted.
///
/// # Safety
/// `s` must be a pointer previously returned by an `agentic_*` function
/// that documents freeing via this call, and not freed before.
#[no_mangle]
pub unsafe extern "C" fn agentic_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// A parsed blueprint. Opaque; free with [`agentic_blueprint_free`].
pub struct AgenticBlueprint {
    inner: Blueprint,
}

unsafe fn read_utf8<'a>(ptr: *const c_char) -> Result<&'a str, AgenticStatus> {
    if ptr.is_null() {
        return Err(fail(AgenticStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| fail(AgenticStatus::InvalidUtf8, &format!("invalid utf-8: {e}")))
}

fn give_string(out: *mut *mut c_char, value: String) -> AgenticStatus {
    if out.is_null() {
        return fail(AgenticStatus::NullArgument, "null output pointer");
    }
    match CString::new(value.replace('\0', " ")) {
        Ok(s) => {
            unsafe { *out = s.into_raw() };
            AgenticStatus::Ok
        }
        Err(e) => fail(AgenticStatus::InternalError, &e.to_string()),
    }
}

/// Parse a blueprint document (YAML or JSON). On success, `*out` owns a
/// new handle; free it with [`agentic_blueprint_free`].
///
/// # Safety
/// `text` must point to a NUL-terminated string; `out` must be a valid
/// pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn agentic_blueprint_parse(
    text: *const c_char,
    out: *mut *mut AgenticBlueprint,
) -> AgenticStatus {
    if out.is_null() {
        return fail(AgenticStatus::NullArgument, "null output pointer");
    }
    let text = match read_utf8(text) {
        Ok(t) => t,
        Err(status) => return status,
    };
    match parse_blueprint(text) {
        Ok(blueprint) => {
            *out = Box::into_raw(Box::new(AgenticBlueprint { inner: blueprint }));
            AgenticStatus::Ok
        }
        Err(e) => fail(AgenticStatus::ParseError, &e.to_string()),
    }
}

/// Free a blueprint handle. Null is accepted.
///
/// # Safety
/// `bp` must come from [`agentic_blueprint_parse`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn agentic_blueprint_free(bp: *mut AgenticBlueprint) {
    if !bp.is_null() {
        drop(Box::from_raw(bp));
    }
}

/// Serialize a blueprint to its canonical YAML document. Free the output
/// with [`agentic_string_free`].
///
/// # Safety
/// `bp` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn agentic_blueprint_serialize(
    bp: *const AgenticBlueprint,
    out: *mut *mut c_char,
) -> AgenticStatus {
    let Some(bp) = bp.as_ref() else {
        return fail(AgenticStatus::NullArgument, "null blueprint handle");
    };
    give_string(out, serialize_blueprint(&bp.inner))
}

/// The blueprint's machine identifier. Free with [`agentic_string_free`].
///
/// # Safety
/// `bp` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn agentic_blueprint_id(
    bp: *const AgenticBlueprint,
    out: *mut *mut c_char,
) -> AgenticStatus {
    let Some(bp) = bp.as_ref() else {
        return fail(AgenticStatus::NullArgument, "null blueprint handle");
    };
    give_string(out, bp.inner.metadata.id.clone())
}

/// The blueprint's semantic version, `major.minor.patch`. Free with
/// [`agentic_string_free`].
///
/// # Safety
/// `bp` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn agentic_blueprint_version(
    bp: *const AgenticBlueprint,
    out: *mut *mut c_char,
) -> AgenticStatus {
    let Some(bp) = bp.as_ref() else {
        return fail(AgenticStatus::NullArgument, "null blueprint handle");
    };
    give_string(out, bp.inner.metadata.version.to_string())
}

/// Validate a blueprint file (including its local-agent tree) and return
/// a one-line summary. Free the summary with [`agentic_string_free`].
///
/// # Safety
/// `path` must be NUL-terminated; `out_summary` must be valid.
#[no_mangle]
pub unsafe extern "C" fn agentic_validate_file(
    path: *const c_char,
    out_summary: *mut *mut c_char,
) -> AgenticStatus {
    let path = match read_utf8(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match cmd_validate(Path::new(path)) {
        Ok(summary) => give_string(out_summary, summary),
        Err(e) => fail(AgenticStatus::ValidationError, &e.to_string()),
    }
}

/// Validate a JSON value against an inline schema (both as JSON text).
/// The report lands in `out_report_json` as
/// `{status, violations: [{path, expected, found}]}`; free it with
/// [`agentic_string_free`]. Schema violations are reported inside the
/// report, not as a status code.
///
/// # Safety
/// Both inputs must be NUL-terminated strings; `out_report_json` must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn agentic_validate_payload(
    schema_json: *const c_char,
    value_json: *const c_char,
    out_report_json: *mut *mut c_char,
) -> AgenticStatus {
    let schema_text = match read_utf8(schema_json) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let value_text = match read_utf8(value_json) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let schema_value: serde_json::Value = match serde_json::from_str(schema_text) {
        Ok(v) => v,
        Err(e) => return fail(AgenticStatus::ParseError, &format!("schema: {e}")),
    };
    let schema = match SchemaNode::from_value(&schema_value, "$") {
        Ok(s) => s,
        Err(e) => return fail(AgenticStatus::ParseError, &e.to_string()),
    };
    let value: serde_json::Value = match serde_json::from_str(value_text) {
        Ok(v) => v,
        Err(e) => return fail(AgenticStatus::ParseError, &format!("value: {e}")),
    };
    let report = validate_payload(&schema, &value);
    match serde_json::to_string(&report) {
        Ok(json) => give_string(out_report_json, json),
        Err(e) => fail(AgenticStatus::InternalError, &e.to_string()),
    }
}

/// Run one seeded task from a JSON run configuration (the same shape the
/// CLI's `--config` accepts). The metrics report lands in
/// `out_metrics_json`; free it with [`agentic_string_free`]. Task failure
/// is reported inside the metrics (`success: false`), not as a status.
///
/// # Safety
/// `run_config_json` must be NUL-terminated; `out_metrics_json` must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn agentic_run(
    run_config_json: *const c_char,
    out_metrics_json: *mut *mut c_char,
) -> AgenticStatus {
    let config_text = match read_utf8(run_config_json) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let config: RunConfig = match serde_json::from_str(config_text) {
        Ok(c) => c,
        Err(e) => return fail(AgenticStatus::ParseError, &format!("config: {e}")),
    };
    match cmd_run(&config) {
        Ok(metrics) => match serde_json::to_string(&metrics) {
            Ok(json) => give_string(out_metrics_json, json),
            Err(e) => fail(AgenticStatus::InternalError, &e.to_string()),
        },
        Err(HarnessError::Validation(m)) => fail(AgenticStatus::ValidationError, &m),
        Err(HarnessError::TaskFailure(m)) => fail(AgenticStatus::InternalError, &m),
        Err(HarnessError::Internal(m)) => fail(AgenticStatus::InternalError, &m),
    }
}
