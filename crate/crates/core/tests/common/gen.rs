//! Random command sequences for property and acceptance tests.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use secbelief::ingest::RawReport;
use secbelief::model::{Severity, ValidationState, Verdict};
use secbelief::rules::{DEDUP, PRIORITIZE};
use secbelief::statement::{BeliefId, Statement, StatementKind};
use secbelief::store::KbState;
use secbelief::{AssessmentRequest, KnowledgeBase, SubjectRef};

const WORDS: [&str; 12] = [
    "sql", "injection", "login", "buffer", "overflow", "parser", "token", "leak", "header", "unsafe", "cookie",
    "path",
];
const SEVERITIES: [&str; 6] = ["critical", "high", "moderate", "low", "info", "bogus"];

pub struct SequenceGen {
    rng: ChaCha8Rng,
    now: i64,
    reports: u32,
}

/// What a step did, for failure messages.
#[derive(Debug, Clone)]
pub enum Step {
    Ingest { run: String, findings: usize },
    Assess { issue: BeliefId, verdict: Verdict },
    Reconfigure { rule: &'static str, config: serde_json::Value },
    Retract { belief: BeliefId, kind: StatementKind },
    Noop,
}

impl SequenceGen {
    pub fn new(seed: u64) -> Self {
        SequenceGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            now: 1_000,
            reports: 0,
        }
    }

    fn words(&mut self, min: usize, max: usize) -> String {
        let n = self.rng.random_range(min..=max);
        (0..n)
            .map(|_| *WORDS.choose(&mut self.rng).unwrap())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn report(&mut self) -> RawReport {
        self.reports += 1;
        let dast = self.rng.random_bool(0.3);
        let n = self.rng.random_range(1..=5);
        let findings: Vec<serde_json::Value> = (0..n)
            .map(|_| {
                let mut f = json!({
                    "title": self.words(2, 4),
                    "description": self.words(0, 3),
                    "severity": *SEVERITIES.choose(&mut self.rng).unwrap(),
                    "check": format!("R{}", self.rng.random_range(1..=4)),
                });
                if dast {
                    f["endpoint"] = format!("/e{}", self.rng.random_range(1..=3)).into();
                } else {
                    f["path"] = format!("src/f{}.c", self.rng.random_range(1..=3)).into();
                    f["line"] = self.rng.random_range(1..=3).into();
                }
                f
            })
            .collect();
        let doc = json!({
            "tool": if dast { "beta" } else { "alpha" },
            "category": if dast { "DAST" } else { "SAST" },
            "findings": findings,
        });
        let run = format!("run-{}", self.rng.random_range(1..=4));
        RawReport::new(serde_json::to_vec(&doc).unwrap(), run, self.now)
    }

    /// Applies one random command to `kb`. Domain errors are part of the
    /// contract under test and cause a panic.
    pub fn step(&mut self, kb: &mut KnowledgeBase) -> Step {
        self.now += 10 * self.rng.random_range(0..=2);
        let roll = self.rng.random_range(0..100);
        if roll < 45 || kb.state().active_ids(StatementKind::IssueExists).is_empty() {
            let raw = self.report();
            let run = raw.pipeline_run_id.clone();
            let r = kb.ingest(&raw).expect("generated reports parse");
            return Step::Ingest { run, findings: r.findings };
        }
        if roll < 75 {
            return self.assess(kb);
        }
        if roll < 85 {
            let (rule, config) = if self.rng.random_bool(0.6) {
                let t = *[0.5, 0.7, 0.9].choose(&mut self.rng).unwrap();
                (DEDUP, json!({ "threshold": t }))
            } else {
                let b = *[1.25, 1.5].choose(&mut self.rng).unwrap();
                (PRIORITIZE, json!({ "confirm_boost": b }))
            };
            kb.reconfigure_rule(rule, config.clone(), self.now).expect("reconfigure");
            return Step::Reconfigure { rule, config };
        }
        let candidates: Vec<(BeliefId, StatementKind)> = [StatementKind::AssessmentMade, StatementKind::ReportIngested]
            .into_iter()
            .flat_map(|k| kb.state().active_ids(k).iter().map(move |id| (id.clone(), k)))
            .collect();
        match candidates.choose(&mut self.rng) {
            Some((id, kind)) => {
                kb.retract(id, "random retraction", self.now).expect("retract");
                Step::Retract { belief: id.clone(), kind: *kind }
            }
            None => Step::Noop,
        }
    }

    fn assess(&mut self, kb: &mut KnowledgeBase) -> Step {
        let issues: Vec<(BeliefId, Vec<String>)> = kb
            .state()
            .active(StatementKind::IssueExists)
            .map(|b| (b.id.clone(), b.statement.as_issue().unwrap().members.iter().cloned().collect()))
            .collect();
        let (issue, members) = issues.choose(&mut self.rng).unwrap().clone();
        let verdict = match self.rng.random_range(0..5) {
            0 => Verdict::FalsePositive,
            1 => Verdict::Confirmed,
            2 => Verdict::Mitigated,
            3 => Verdict::SeverityOverride {
                level: *Severity::ALL.choose(&mut self.rng).unwrap(),
            },
            _ if members.len() >= 2 => {
                let picked: Vec<&String> = members.sample(&mut self.rng, 2).collect();
                Verdict::NotDuplicate {
                    a: picked[0].clone(),
                    b: picked[1].clone(),
                }
            }
            _ => Verdict::FalsePositive,
        };
        let author = if self.rng.random_bool(0.5) { "alice" } else { "bob" };
        kb.submit_assessment(
            &AssessmentRequest {
                subject: SubjectRef::Issue(issue.clone()),
                verdict: verdict.clone(),
                rationale: String::new(),
                author: author.into(),
            },
            self.now,
        )
        .expect("assessment on an active issue");
        Step::Assess { issue, verdict }
    }
}

/// Checks the human-dominance property on every Active issue. Returns a
/// description of each counterexample.
pub fn dominance_violations(state: &KbState) -> Vec<String> {
    let mut bad = Vec::new();
    for issue in state.active(StatementKind::IssueExists) {
        let members = &issue.statement.as_issue().unwrap().members;
        let verdicts: Vec<(i64, ValidationState)> = state
            .active(StatementKind::AssessmentMade)
            .filter_map(|b| b.statement.as_assessment())
            .filter(|a| a.subject.targets_issue(&issue.id, members))
            .filter_map(|a| a.verdict.status().map(|s| (a.at, s)))
            .collect();
        let Some(newest) = verdicts.iter().map(|(at, _)| *at).max() else { continue };
        let newest_states: BTreeSet<ValidationState> =
            verdicts.iter().filter(|(at, _)| *at == newest).map(|(_, s)| *s).collect();
        let statuses: Vec<ValidationState> = state
            .active(StatementKind::ValidationStatus)
            .filter_map(|b| match &b.statement {
                Statement::ValidationStatus(v) if v.issue == issue.id => Some(v.status),
                _ => None,
            })
            .collect();
        if statuses.len() != 1 || !newest_states.contains(&statuses[0]) {
            bad.push(format!("issue {}: statuses {statuses:?}, newest verdicts {newest_states:?}", issue.id));
            continue;
        }
        if newest_states == BTreeSet::from([ValidationState::FalsePositive]) {
            let ranked = state.active(StatementKind::PriorityAssigned).any(|b| match &b.statement {
                Statement::PriorityAssigned(p) => p.issue == issue.id,
                _ => false,
            });
            if ranked {
                bad.push(format!("false-positive issue {} still ranked", issue.id));
            }
        }
    }
    bad
}

/// Ranks over Active priorities form 1..=n.
pub fn ranks_are_permutation(state: &KbState) -> bool {
    let mut ranks: Vec<u32> = state
        .active(StatementKind::PriorityAssigned)
        .filter_map(|b| match &b.statement {
            Statement::PriorityAssigned(p) => Some(p.rank),
            _ => None,
        })
        .collect();
    ranks.sort_unstable();
    ranks.iter().enumerate().all(|(i, r)| *r == i as u32 + 1)
}

/// Every Active finding belongs to exactly one Active issue.
pub fn issues_partition_findings(state: &KbState) -> bool {
    let mut seen = BTreeSet::new();
    for issue in state.active(StatementKind::IssueExists) {
        for m in &issue.statement.as_issue().unwrap().members {
            if !seen.insert(m.clone()) {
                return false;
            }
        }
    }
    let observed: BTreeSet<String> = state.observations().keys().cloned().collect();
    seen == observed
}
