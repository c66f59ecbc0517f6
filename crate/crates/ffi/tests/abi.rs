use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use secbelief_ffi::*;

fn fixture(name: &str) -> Vec<u8> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name);
    std::fs::read(path).unwrap()
}

fn take(s: *mut std::ffi::c_char) -> serde_json::Value {
    assert!(!s.is_null());
    let v = serde_json::from_str(unsafe { CStr::from_ptr(s) }.to_str().unwrap()).unwrap();
    unsafe { sb_string_free(s) };
    v
}

fn last_error() -> String {
    let p = sb_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Kb(*mut SbKnowledgeBase);

impl Drop for Kb {
    fn drop(&mut self) {
        unsafe { sb_kb_free(self.0) };
    }
}

fn memory() -> Kb {
    let mut kb = ptr::null_mut();
    assert_eq!(unsafe { sb_kb_open_memory(ptr::null(), &mut kb) }, SbStatus::Ok);
    Kb(kb)
}

fn ingest(kb: &Kb, name: &str) -> serde_json::Value {
    let bytes = fixture(name);
    let run = CString::new("run-1").unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { sb_kb_ingest(kb.0, bytes.as_ptr(), bytes.len(), ptr::null(), run.as_ptr(), 100, &mut out) };
    assert_eq!(status, SbStatus::Ok);
    take(out)
}

fn issues(kb: &Kb, status: Option<&str>) -> serde_json::Value {
    let status = status.map(|s| CString::new(s).unwrap());
    let mut out = ptr::null_mut();
    let code = unsafe { sb_kb_issues(kb.0, status.as_ref().map_or(ptr::null(), |s| s.as_ptr()), ptr::null(), &mut out) };
    assert_eq!(code, SbStatus::Ok);
    take(out)
}

#[test]
fn ingest_rank_assess_and_explain() {
    let kb = memory();
    assert_eq!(ingest(&kb, "sarif_small.json")["findings"], 3);
    let list = issues(&kb, None);
    assert_eq!(list.as_array().unwrap().len(), 3);
    let key = list[0]["issue_key"].as_str().unwrap().to_string();

    let request = CString::new(format!(
        r#"{{"subject":{{"issue":"{key}"}},"verdict":"false_positive","rationale":"r","author":"alice"}}"#
    ))
    .unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { sb_kb_assess(kb.0, request.as_ptr(), 200, &mut out) }, SbStatus::Ok);
    let outcome = take(out);
    assert!(outcome["revision"]["retracted"].as_array().unwrap().len() >= 2);
    assert_eq!(issues(&kb, Some("false_positive")).as_array().unwrap().len(), 1);

    let id = CString::new(key).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { sb_kb_explain(kb.0, id.as_ptr(), &mut out) }, SbStatus::Ok);
    assert_eq!(take(out)["kind"], "IssueExists");

    let mut unsupported = usize::MAX;
    assert_eq!(unsafe { sb_kb_audit(kb.0, &mut unsupported) }, SbStatus::Ok);
    assert_eq!(unsupported, 0);

    let assessment = CString::new(outcome["assessment_belief"].as_str().unwrap()).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { sb_kb_retract(kb.0, assessment.as_ptr(), ptr::null(), 300, &mut out) }, SbStatus::Ok);
    take(out);
    assert!(issues(&kb, Some("false_positive")).as_array().unwrap().is_empty());
}

#[test]
fn errors_carry_codes_and_messages() {
    let kb = memory();
    let mut out = ptr::null_mut();
    let garbage = b"hello";
    let code = unsafe { sb_kb_ingest(kb.0, garbage.as_ptr(), garbage.len(), ptr::null(), ptr::null(), 1, &mut out) };
    assert_eq!(code, SbStatus::UnknownFormat);
    assert!(out.is_null());
    assert!(last_error().contains("format"));

    let bad = CString::new(r#"{"subject":{"finding":"nope"},"verdict":"confirmed","author":"a"}"#).unwrap();
    assert_eq!(unsafe { sb_kb_assess(kb.0, bad.as_ptr(), 1, &mut out) }, SbStatus::UnknownSubject);
    let bad = CString::new(r#"{"subject":{"finding":"nope"},"verdict":"perhaps","author":"a"}"#).unwrap();
    assert_eq!(unsafe { sb_kb_assess(kb.0, bad.as_ptr(), 1, &mut out) }, SbStatus::InvalidAssessment);

    let id = CString::new("zzz").unwrap();
    assert_eq!(unsafe { sb_kb_explain(kb.0, id.as_ptr(), &mut out) }, SbStatus::UnknownBelief);
    assert_eq!(unsafe { sb_kb_explain(ptr::null(), id.as_ptr(), &mut out) }, SbStatus::NullArgument);
    assert_eq!(unsafe { sb_kb_issues(kb.0, ptr::null(), ptr::null(), ptr::null_mut()) }, SbStatus::NullArgument);

    let mut seq = 0;
    assert_eq!(unsafe { sb_kb_seq(kb.0, &mut seq) }, SbStatus::Ok);
    assert!(sb_last_error().is_null());

    let bad_rules = CString::new(r#"{"dedup":{"threshold":7}}"#).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { sb_kb_open_memory(bad_rules.as_ptr(), &mut handle) }, SbStatus::InvalidArgument);
    assert!(handle.is_null());
}

#[test]
fn persistent_handle_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let open = || {
        let mut kb = ptr::null_mut();
        let code = unsafe { sb_kb_open(path.as_ptr(), ptr::null(), 0, &mut kb) };
        (code, Kb(kb))
    };
    let (code, first) = open();
    assert_eq!(code, SbStatus::Ok);
    ingest(&first, "dedup_chain.json");
    let before = issues(&first, None);
    let (code, _second) = open();
    assert_eq!(code, SbStatus::Storage, "directory is locked");
    drop(first);
    let (code, again) = open();
    assert_eq!(code, SbStatus::Ok);
    assert_eq!(issues(&again, None), before);
}

#[test]
fn version_is_a_static_string() {
    let v = unsafe { CStr::from_ptr(sb_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// Compiles a small C program against the generated header and the static
/// library, when a C compiler and the archive are available.
#[test]
fn c_program_links_against_the_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("secbelief.h").exists(), "header is generated by the build script");
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let archive = profile_dir.join("libsecbelief_ffi.a");
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("skipping C link check: no C compiler");
        return;
    };
    if !archive.exists() {
        eprintln!("skipping C link check: {} not built", archive.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "secbelief.h"

int main(void) {
    SbKnowledgeBase *kb = NULL;
    if (sb_kb_open_memory(NULL, &kb) != SB_STATUS_OK) return 1;
    const char *report = "{\"tool\":\"zap\",\"category\":\"DAST\",\"findings\":[{\"title\":\"XSS\",\"severity\":\"high\",\"endpoint\":\"/q\"}]}";
    char *out = NULL;
    if (sb_kb_ingest(kb, (const uint8_t *)report, strlen(report), NULL, "run-1", 1, &out) != SB_STATUS_OK) return 2;
    sb_string_free(out);
    if (sb_kb_issues(kb, NULL, NULL, &out) != SB_STATUS_OK) return 3;
    int ranked = strstr(out, "\"rank\":1") != NULL;
    sb_string_free(out);
    if (sb_kb_ingest(kb, (const uint8_t *)"x", 1, NULL, NULL, 2, &out) != SB_STATUS_UNKNOWN_FORMAT) return 4;
    if (sb_last_error() == NULL) return 5;
    sb_kb_free(kb);
    return ranked ? 0 : 6;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let status = std::process::Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&archive)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    assert_eq!(std::process::Command::new(&bin).status().unwrap().code(), Some(0));
}
