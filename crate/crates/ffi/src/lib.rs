//! C ABI for the secbelief knowledge base.
//!
//! Handles are opaque. Every function returns an [`SbStatus`]; on failure the
//! message is available from [`sb_last_error`] on the same thread. Strings
//! returned through `out_json` parameters are NUL-terminated JSON owned by the
//! caller and must be released with [`sb_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use secbelief::ingest::RawReport;
use secbelief::model::ReportFormat;
use secbelief::rules::{builtin_catalog, in_memory_kb, install_builtin, RulesConfig};
use secbelief::views::IssueFilter;
use secbelief::{AssessmentRequest, BeliefId, IngestError, KbError, KnowledgeBase};

/// Result code of every `sb_*` call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    UnknownFormat = 4,
    MalformedReport = 5,
    UnknownSubject = 6,
    UnknownBelief = 7,
    InvalidAssessment = 8,
    Storage = 9,
    Internal = 10,
    Panic = 11,
}

/// Opaque knowledge base handle.
pub struct SbKnowledgeBase {
    kb: KnowledgeBase,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(SbStatus, String);

impl From<KbError> for Failure {
    fn from(e: KbError) -> Self {
        let status = match &e {
            KbError::Ingest(IngestError::UnknownFormat(_)) => SbStatus::UnknownFormat,
            KbError::Ingest(_) => SbStatus::MalformedReport,
            KbError::UnknownSubject(_) => SbStatus::UnknownSubject,
            KbError::UnknownBelief(_) => SbStatus::UnknownBelief,
            KbError::InvalidAssessment(_) => SbStatus::InvalidAssessment,
            KbError::SchemaViolation(_) | KbError::InvalidRuleConfig { .. } => SbStatus::InvalidArgument,
            KbError::StorageFailure(_) | KbError::CorruptLog { .. } => SbStatus::Storage,
            _ => SbStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

/// Runs `body`, translating errors and panics into a status code.
fn guard(body: impl FnOnce() -> FfiResult<()>) -> SbStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SbStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SbStatus::Panic
        }
    }
}

unsafe fn opt_str<'a>(ptr: *const c_char, name: &str) -> FfiResult<Option<&'a str>> {
    if ptr.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(Some)
        .map_err(|_| Failure(SbStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn req_str<'a>(ptr: *const c_char, name: &str) -> FfiResult<&'a str> {
    opt_str(ptr, name)?.ok_or_else(|| Failure(SbStatus::NullArgument, format!("{name} is null")))
}

unsafe fn handle<'a>(kb: *const SbKnowledgeBase) -> FfiResult<&'a SbKnowledgeBase> {
    kb.as_ref().ok_or_else(|| Failure(SbStatus::NullArgument, "kb is null".into()))
}

unsafe fn handle_mut<'a>(kb: *mut SbKnowledgeBase) -> FfiResult<&'a mut SbKnowledgeBase> {
    kb.as_mut().ok_or_else(|| Failure(SbStatus::NullArgument, "kb is null".into()))
}

unsafe fn write_json<T: serde::Serialize>(out: *mut *mut c_char, value: &T) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure(SbStatus::NullArgument, "out_json is null".into()));
    }
    let text = serde_json::to_string(value).map_err(|e| Failure(SbStatus::Internal, e.to_string()))?;
    let c = CString::new(text).map_err(|e| Failure(SbStatus::Internal, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn write_handle(out: *mut *mut SbKnowledgeBase, kb: KnowledgeBase) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure(SbStatus::NullArgument, "out is null".into()));
    }
    *out = Box::into_raw(Box::new(SbKnowledgeBase { kb }));
    Ok(())
}

fn rules(json: Option<&str>) -> FfiResult<RulesConfig> {
    Ok(match json {
        Some(text) => RulesConfig::from_json(text)?,
        None => RulesConfig::default(),
    })
}

/// Creates an in-memory knowledge base. `rules_json` may be null for defaults.
///
/// # Safety
/// `rules_json` must be null or a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_kb_open_memory(rules_json: *const c_char, out: *mut *mut SbKnowledgeBase) -> SbStatus {
    guard(|| {
        let config = rules(opt_str(rules_json, "rules_json")?)?;
        write_handle(out, in_memory_kb(&config)?)
    })
}

/// Opens or creates a persistent knowledge base in `data_dir`, replaying its
/// event log. The directory stays locked until the handle is freed.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_kb_open(
    data_dir: *const c_char,
    rules_json: *const c_char,
    at: i64,
    out: *mut *mut SbKnowledgeBase,
) -> SbStatus {
    guard(|| {
        let dir = req_str(data_dir, "data_dir")?;
        let config = rules(opt_str(rules_json, "rules_json")?)?;
        let mut kb = KnowledgeBase::open(Path::new(dir), builtin_catalog())?;
        install_builtin(&mut kb, &config, at)?;
        write_handle(out, kb)
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `kb` must be null or a handle from `sb_kb_open*` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn sb_kb_free(kb: *mut SbKnowledgeBase) {
    if !kb.is_null() {
        drop(Box::from_raw(kb));
    }
}

/// Ingests one raw report. `format` (sarif, generic, dependency) and `run_id`
/// may be null. Writes the ingestion result as JSON.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; other pointers as documented above.
#[no_mangle]
pub unsafe extern "C" fn sb_kb_ingest(
    kb: *mut SbKnowledgeBase,
    bytes: *const u8,
    len: usize,
    format: *const c_char,
    run_id: *const c_char,
    received_at: i64,
    out_json: *mut *mut c_char,
) -> SbStatus {
    guard(|| {
        let handle = handle_mut(kb)?;
        if bytes.is_null() && len > 0 {
            return Err(Failure(SbStatus::NullArgument, "bytes is null".into()));
        }
        let data = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(bytes, len).to_vec() };
        let mut raw = RawReport::new(data, opt_str(run_id, "run_id")?.unwrap_or("adhoc"), received_at);
        if let Some(f) = opt_str(format, "format")? {
            raw.declared_format = Some(
                ReportFormat::parse(f).ok_or_else(|| Failure(SbStatus::UnknownFormat, format!("unknown format '{f}'")))?,
            );
        }
        let result = handle.kb.ingest(&raw)?;
        write_json(out_json, &result)
    })
}

/// Writes the issue list as JSON, filtered by `status` and `min_severity`
/// (either may be null).
///
/// # Safety
/// `kb` must be a live handle, strings null or NUL-terminated, out pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_kb_issues(
    kb: *const SbKnowledgeBase,
    status: *const c_char,
    min_severity: *const c_char,
    out_json: *mut *mut c_char,
) -> SbStatus {
    guard(|| {
        let handle = handle(kb)?;
        let filter = IssueFilter::parse(opt_str(status, "status")?, opt_str(min_severity, "min_severity")?, None)
            .map_err(|e| Failure(SbStatus::InvalidArgument, e))?;
        write_json(out_json, &handle.kb.issues(&filter))
    })
}

/// Submits an assessment given as JSON (`subject`, `verdict`, `rationale`,
/// `author`). Writes the outcome, including the revision report.
///
/// # Safety
/// `kb` must be a live handle, strings null or NUL-terminated, out pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_kb_assess(
    kb: *mut SbKnowledgeBase,
    request_json: *const c_char,
    at: i64,
    out_json: *mut *mut c_char,
) -> SbStatus {
    guard(|| {
        let handle = handle_mut(kb)?;
        let request = AssessmentRequest::from_json(req_str(request_json, "request_json")?.as_bytes())
            .map_err(|e| Failure(SbStatus::InvalidAssessment, e))?;
        let outcome = handle.kb.submit_assessment(&request, at)?;
        write_json(out_json, &outcome)
    })
}

/// Retracts a belief and everything resting on it. Writes the revision report.
///
/// # Safety
/// `kb` must be a live handle, strings null or NUL-terminated, out pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_kb_retract(
    kb: *mut SbKnowledgeBase,
    belief_id: *const c_char,
    reason: *const c_char,
    at: i64,
    out_json: *mut *mut c_char,
) -> SbStatus {
    guard(|| {
        let handle = handle_mut(kb)?;
        let id = parse_id(req_str(belief_id, "belief_id")?)?;
        let report = handle.kb.retract(&id, opt_str(reason, "reason")?.unwrap_or("retracted"), at)?;
        write_json(out_json, &report)
    })
}

fn parse_id(raw: &str) -> FfiResult<BeliefId> {
    raw.parse()
        .map_err(|_| Failure(SbStatus::UnknownBelief, format!("unknown belief {raw}")))
}

/// Writes the justification tree of a belief as JSON.
///
/// # Safety
/// `kb` must be a live handle, strings null or NUL-terminated, out pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_kb_explain(
    kb: *const SbKnowledgeBase,
    belief_id: *const c_char,
    out_json: *mut *mut c_char,
) -> SbStatus {
    guard(|| {
        let handle = handle(kb)?;
        let tree = handle.kb.explain(&parse_id(req_str(belief_id, "belief_id")?)?)?;
        write_json(out_json, &tree)
    })
}

/// Counts Active derived beliefs that have lost all support. Zero means healthy.
///
/// # Safety
/// `kb` must be a live handle, strings null or NUL-terminated, out pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_kb_audit(kb: *const SbKnowledgeBase, out_unsupported: *mut usize) -> SbStatus {
    guard(|| {
        let handle = handle(kb)?;
        if out_unsupported.is_null() {
            return Err(Failure(SbStatus::NullArgument, "out_unsupported is null".into()));
        }
        *out_unsupported = handle.kb.well_founded_audit().len();
        Ok(())
    })
}

/// Sequence number of the newest event.
///
/// # Safety
/// `kb` must be a live handle, strings null or NUL-terminated, out pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_kb_seq(kb: *const SbKnowledgeBase, out_seq: *mut u64) -> SbStatus {
    guard(|| {
        let handle = handle(kb)?;
        if out_seq.is_null() {
            return Err(Failure(SbStatus::NullArgument, "out_seq is null".into()));
        }
        *out_seq = handle.kb.state().seq();
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next `sb_*` call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn sb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from an `out_json` parameter, freed once.
#[no_mangle]
pub unsafe extern "C" fn sb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
