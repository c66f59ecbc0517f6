mod common;

use std::collections::BTreeSet;

use common::*;
use secbelief::model::{Severity, ValidationState, Verdict};
use secbelief::statement::StatementKind;
use secbelief::store::StatementPattern;
use secbelief::{AssessmentRequest, KbError, SubjectRef};

fn assess(kb: &mut secbelief::KnowledgeBase, issue: &str, verdict: Verdict, at: i64) -> secbelief::AssessmentOutcome {
    let key = issue_with(kb, issue).issue_key;
    kb.submit_assessment(
        &AssessmentRequest {
            subject: SubjectRef::Issue(key),
            verdict,
            rationale: "checked".into(),
            author: "alice".into(),
        },
        at,
    )
    .unwrap()
}

#[test]
fn sarif_fixture_yields_three_ranked_issues() {
    let mut kb = kb();
    let r = kb.ingest(&raw("sarif_small.json", "run-1", 100)).unwrap();
    assert_eq!((r.findings, r.skipped), (3, 0));
    let views = issues(&kb);
    assert_eq!(views.len(), 3);
    let ranks: Vec<_> = views.iter().map(|v| v.rank.unwrap()).collect();
    assert_eq!(ranks, vec![1, 2, 3]);
    let sev: Vec<_> = views.iter().map(|v| v.max_severity).collect();
    assert_eq!(sev, vec![Severity::High, Severity::Medium, Severity::Low]);
    assert!(kb.well_founded_audit().is_empty());
}

#[test]
fn reingesting_identical_bytes_adds_no_events() {
    let mut kb = kb();
    kb.ingest(&raw("sarif_small.json", "run-1", 100)).unwrap();
    let seq = kb.state().seq();
    let again = kb.ingest(&raw("sarif_small.json", "run-1", 200)).unwrap();
    assert_eq!(again.findings, 3);
    assert_eq!(again.new_events, 0);
    assert_eq!(kb.state().seq(), seq);
}

#[test]
fn malformed_report_leaves_log_unchanged() {
    let mut kb = kb();
    let seq = kb.state().seq();
    let bad = secbelief::ingest::RawReport::new(b"{\"findings\": [".to_vec(), "run-1", 5)
        .with_format(secbelief::model::ReportFormat::GenericJson);
    assert!(matches!(kb.ingest(&bad), Err(KbError::Ingest(_))));
    assert_eq!(kb.state().seq(), seq);
}

#[test]
fn dedup_chain_forms_two_issues_and_not_duplicate_splits() {
    let mut kb = kb();
    kb.ingest(&raw("dedup_chain.json", "run-1", 100)).unwrap();
    let views = issues(&kb);
    assert_eq!(views.len(), 2);
    let abc = &views[0];
    assert_eq!(abc.members.len(), 3);
    assert_eq!(abc.score, Some(7.0));
    assert_eq!(abc.rank, Some(1));
    assert_eq!(views[1].score, Some(4.0));

    let outcome = assess(
        &mut kb,
        "gitleaks:A:src/config.rs:12",
        Verdict::NotDuplicate {
            a: "gitleaks:A:src/config.rs:12".into(),
            b: "gitleaks:B:src/config.rs:40".into(),
        },
        200,
    );
    assert!(!outcome.revision.retracted.is_empty());
    let views = issues(&kb);
    assert_eq!(views.len(), 3);
    let members: BTreeSet<usize> = views.iter().map(|v| v.members.len()).collect();
    assert_eq!(members, BTreeSet::from([1, 2]));
    let ranks: BTreeSet<u32> = views.iter().filter_map(|v| v.rank).collect();
    assert_eq!(ranks, BTreeSet::from([1, 2, 3]));
    assert!(kb.well_founded_audit().is_empty());
    assert_eq!(kb.full_recompute().unwrap().active_set(), kb.state().active_set());
}

#[test]
fn false_positive_removes_priority_and_retraction_restores_it() {
    let mut kb = kb();
    kb.ingest(&raw("sarif_small.json", "run-1", 100)).unwrap();
    let key = "semgrep:c.buffer-overflow:a.c:10";
    let before = issue_with(&kb, key);
    assert_eq!(before.rank, Some(1));

    let outcome = assess(&mut kb, key, Verdict::FalsePositive, 200);
    let retracted_kinds: BTreeSet<StatementKind> = outcome
        .revision
        .retracted
        .iter()
        .map(|e| kb.get(&e.id).unwrap().kind())
        .collect();
    assert!(retracted_kinds.contains(&StatementKind::ValidationStatus));
    assert!(retracted_kinds.contains(&StatementKind::PriorityAssigned));
    let after = issue_with(&kb, key);
    assert_eq!(after.status, ValidationState::FalsePositive);
    assert_eq!(after.rank, None);
    let ranks: Vec<_> = issues(&kb).iter().filter_map(|v| v.rank).collect();
    assert_eq!(ranks, vec![1, 2]);

    // Withdrawing the assessment brings the machine view back.
    kb.retract(&outcome.assessment_belief, "withdrawn", 300).unwrap();
    let restored = issue_with(&kb, key);
    assert_eq!(restored.status, ValidationState::Unreviewed);
    assert_eq!(restored.rank, Some(1));
    assert!(kb.well_founded_audit().is_empty());
}

#[test]
fn newer_human_verdict_wins() {
    let mut kb = kb();
    kb.ingest(&raw("sarif_small.json", "run-1", 100)).unwrap();
    let key = "semgrep:c.format-string:b.c:20";
    assess(&mut kb, key, Verdict::FalsePositive, 100);
    assess(&mut kb, key, Verdict::Confirmed, 200);
    assert_eq!(issue_with(&kb, key).status, ValidationState::Confirmed);
    assert!(kb.status().contradictions_resolved >= 2);
}

#[test]
fn confirmed_issue_seen_in_two_reports_scores_formula_value() {
    let mut kb = kb();
    kb.ingest(&raw("sarif_small.json", "run-1", 100)).unwrap();
    kb.ingest(&raw("sarif_small.json", "run-2", 110)).unwrap();
    let key = "semgrep:c.buffer-overflow:a.c:10";
    assert_eq!(issue_with(&kb, key).observed_in_reports, 2);
    assess(&mut kb, key, Verdict::Confirmed, 200);
    let expected = 7.0 * (1.0 + 2f64.ln()) * 1.25;
    let score = issue_with(&kb, key).score.unwrap();
    assert!((score - expected).abs() < 1e-9);
    assert!((score - 14.815_037_829_899_52).abs() < 1e-9);
}

#[test]
fn severity_override_changes_score() {
    let mut kb = kb();
    kb.ingest(&raw("sarif_small.json", "run-1", 100)).unwrap();
    let key = "semgrep:c.unchecked-return:a.c:30";
    assert_eq!(issue_with(&kb, key).score, Some(1.0));
    assess(&mut kb, key, Verdict::SeverityOverride { level: Severity::Critical }, 200);
    let v = issue_with(&kb, key);
    assert_eq!(v.score, Some(10.0));
    assert_eq!(v.rank, Some(1));
}

#[test]
fn retracting_a_report_removes_its_findings_and_issues() {
    let mut kb = kb();
    let a = kb.ingest(&raw("sarif_small.json", "run-1", 100)).unwrap();
    kb.ingest(&raw("dast_small.json", "run-1", 110)).unwrap();
    assert_eq!(issues(&kb).len(), 5);
    let report = kb.retract(&a.report_belief, "bad scan", 200).unwrap();
    assert!(report.retracted.len() >= 3);
    assert_eq!(issues(&kb).len(), 2);
    assert!(kb.query(&StatementPattern::kind(StatementKind::FindingObserved)).len() == 2);
    assert!(kb.well_founded_audit().is_empty());
    assert_eq!(kb.full_recompute().unwrap().active_set(), kb.state().active_set());
}

#[test]
fn unknown_subject_is_rejected() {
    let mut kb = kb();
    let err = kb
        .submit_assessment(
            &AssessmentRequest {
                subject: SubjectRef::Finding("nope".into()),
                verdict: Verdict::Confirmed,
                rationale: String::new(),
                author: "bob".into(),
            },
            1,
        )
        .unwrap_err();
    assert!(matches!(err, KbError::UnknownSubject(_)));
}

#[test]
fn explanation_of_priority_reaches_report_leaves() {
    let mut kb = kb();
    kb.ingest(&raw("sarif_small.json", "run-1", 100)).unwrap();
    let prio = kb.query(&StatementPattern::kind(StatementKind::PriorityAssigned))[0].id.clone();
    let tree = kb.explain(&prio).unwrap();
    assert_eq!(tree.rule_id.as_deref(), Some("prioritize"));
    let kinds: BTreeSet<_> = tree.children.iter().map(|c| c.kind).collect();
    assert_eq!(kinds, BTreeSet::from([StatementKind::IssueExists, StatementKind::ValidationStatus]));
    assert!(tree.depth() >= 3);
}
