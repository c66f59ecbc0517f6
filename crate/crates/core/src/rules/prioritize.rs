use std::collections::{BTreeMap, BTreeSet};

use crate::engine::{RuleBody, RuleInput, RuleOutput};
use crate::model::{Priority, Severity, ValidationState, Verdict};
use crate::rules::PrioritizeConfig;
use crate::statement::{BeliefId, Statement, StatementKind, Topic};
use crate::store::KbState;

/// Scores and ranks every open issue:
/// `weight(severity) * (1 + ln(occurrences)) * (confirm_boost if confirmed)`.
#[derive(Debug, Clone)]
pub struct PrioritizeRule {
    config: PrioritizeConfig,
}

impl PrioritizeRule {
    pub fn new(config: PrioritizeConfig) -> Self {
        PrioritizeRule { config }
    }

    pub fn score(&self, severity: Severity, occurrences: usize, confirmed: bool) -> f64 {
        let boost = if confirmed { self.config.confirm_boost } else { 1.0 };
        self.config.weight(severity) * (1.0 + (occurrences.max(1) as f64).ln()) * boost
    }
}

struct Scored {
    issue: BeliefId,
    score: f64,
    premises: BTreeSet<BeliefId>,
}

impl PrioritizeRule {
    fn score_issue(&self, state: &KbState, issue: &BeliefId, members: &BTreeSet<String>) -> Option<Scored> {
        let statuses: Vec<_> = state
            .topic_members(&Topic::Validation { issue: issue.clone() })
            .iter()
            .filter_map(|id| state.get(id))
            .filter(|b| b.kind() == StatementKind::ValidationStatus)
            .collect();
        // A pending conflict is settled before the issue is ranked.
        let [status] = statuses.as_slice() else { return None };
        let Statement::ValidationStatus(v) = &status.statement else { return None };
        if matches!(v.status, ValidationState::FalsePositive | ValidationState::Mitigated) {
            return None;
        }

        let mut override_: Option<(i64, &BeliefId, Severity)> = None;
        for b in state.active(StatementKind::AssessmentMade) {
            let Some(a) = b.statement.as_assessment() else { continue };
            let Verdict::SeverityOverride { level } = a.verdict else { continue };
            if !a.subject.targets_issue(issue, members) {
                continue;
            }
            let better = match override_ {
                None => true,
                Some((at, id, _)) => a.at > at || (a.at == at && b.id < *id),
            };
            if better {
                override_ = Some((a.at, &b.id, level));
            }
        }

        let mut max_severity = None;
        let mut reports = BTreeSet::new();
        for m in members {
            for id in state.observations_of(m) {
                if let Some(f) = state.get(id).and_then(|b| b.statement.as_finding()) {
                    max_severity = max_severity.max(Some(f.severity));
                    reports.insert(&f.report_ref);
                }
            }
        }
        let severity = match override_ {
            Some((_, _, level)) => level,
            None => max_severity?,
        };

        let mut premises = BTreeSet::from([issue.clone(), status.id.clone()]);
        if let Some((_, id, _)) = override_ {
            premises.insert(id.clone());
        }
        Some(Scored {
            issue: issue.clone(),
            score: self.score(severity, reports.len(), v.status == ValidationState::Confirmed),
            premises,
        })
    }
}

impl RuleBody for PrioritizeRule {
    fn evaluate(&self, input: &RuleInput<'_>) -> RuleOutput {
        let state = input.state;
        let mut scored: Vec<Scored> = state
            .active(StatementKind::IssueExists)
            .filter_map(|b| {
                let issue = b.statement.as_issue()?;
                self.score_issue(state, &b.id, &issue.members)
            })
            .collect();
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.issue.cmp(&b.issue)));

        let mut out = RuleOutput::default();
        let mut desired: BTreeMap<BeliefId, ()> = BTreeMap::new();
        for (i, s) in scored.into_iter().enumerate() {
            let statement = Statement::PriorityAssigned(Priority {
                issue: s.issue,
                score: s.score,
                rank: i as u32 + 1,
                formula_version: input.version,
            });
            desired.insert(statement.id(), ());
            out.derive(statement, s.premises);
        }
        out.withdrawn = state
            .active_ids(StatementKind::PriorityAssigned)
            .iter()
            .filter(|id| !desired.contains_key(*id))
            .cloned()
            .collect();
        out
    }
}
