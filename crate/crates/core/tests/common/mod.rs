#![allow(dead_code)]
pub mod api;
pub mod gen;

use std::path::PathBuf;

use secbelief::ingest::RawReport;
use secbelief::rules::{in_memory_kb, RulesConfig};
use secbelief::views::{IssueFilter, IssueView};
use secbelief::KnowledgeBase;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(fixture_path(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

pub fn raw(name: &str, run: &str, at: i64) -> RawReport {
    RawReport::new(fixture(name), run, at)
}

pub fn kb() -> KnowledgeBase {
    in_memory_kb(&RulesConfig::default()).unwrap()
}

pub fn issues(kb: &KnowledgeBase) -> Vec<IssueView> {
    kb.issues(&IssueFilter::default())
}

pub fn issue_with(kb: &KnowledgeBase, finding_key: &str) -> IssueView {
    issues(kb)
        .into_iter()
        .find(|i| i.members.contains(finding_key))
        .unwrap_or_else(|| panic!("no issue contains {finding_key}"))
}
