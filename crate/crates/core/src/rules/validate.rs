use std::collections::BTreeSet;

use crate::engine::{RuleBody, RuleInput, RuleOutput};
use crate::model::{Validation, ValidationState};
use crate::statement::{BeliefId, Statement, StatementKind};

/// Derives each issue's validation status from the newest human verdict on
/// it, or `Unreviewed` when there is none.
#[derive(Debug, Clone, Copy, Default)]
pub struct ValidateRule;

impl RuleBody for ValidateRule {
    fn evaluate(&self, input: &RuleInput<'_>) -> RuleOutput {
        let state = input.state;
        let mut out = RuleOutput::default();

        let issues: Vec<(&BeliefId, &BTreeSet<String>)> = state
            .active(StatementKind::IssueExists)
            .filter_map(|b| b.statement.as_issue().map(|i| (&b.id, &i.members)))
            .collect();

        let mut affected: BTreeSet<&BeliefId> = BTreeSet::new();
        if input.full {
            affected.extend(issues.iter().map(|(id, _)| *id));
        }
        for id in input.delta.ids() {
            let Some(b) = state.get(id) else { continue };
            match &b.statement {
                Statement::IssueExists(_) if state.is_active(id) => {
                    affected.insert(id);
                }
                Statement::AssessmentMade(a) if a.verdict.status().is_some() => {
                    for (issue, members) in &issues {
                        if a.subject.targets_issue(issue, members) {
                            affected.insert(*issue);
                        }
                    }
                }
                Statement::ValidationStatus(v) if state.is_active(&v.issue) => {
                    if let Some((issue, _)) = issues.iter().find(|(i, _)| **i == v.issue) {
                        affected.insert(*issue);
                    }
                }
                _ => {}
            }
        }

        for (issue, members) in issues.iter().filter(|(id, _)| affected.contains(id)) {
            // Newest verdict wins; equal times go to the smaller resulting belief id.
            let mut best: Option<(i64, BeliefId, &BeliefId, ValidationState)> = None;
            for b in state.active(StatementKind::AssessmentMade) {
                let Some(a) = b.statement.as_assessment() else { continue };
                let Some(status) = a.verdict.status() else { continue };
                if !a.subject.targets_issue(issue, members) {
                    continue;
                }
                let sid = status_statement(issue, status).id();
                let better = match &best {
                    None => true,
                    Some((at, bid, _, _)) => a.at > *at || (a.at == *at && sid < *bid),
                };
                if better {
                    best = Some((a.at, sid, &b.id, status));
                }
            }
            match best {
                Some((_, _, assessment, status)) => {
                    out.derive(status_statement(issue, status), [(*issue).clone(), assessment.clone()])
                }
                None => out.derive(
                    status_statement(issue, ValidationState::Unreviewed),
                    [(*issue).clone()],
                ),
            }
        }
        out
    }
}

fn status_statement(issue: &BeliefId, status: ValidationState) -> Statement {
    Statement::ValidationStatus(Validation {
        issue: issue.clone(),
        status,
    })
}
