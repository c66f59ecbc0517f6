//! Read models served to clients: the issue list and justification trees.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{Severity, SourceRef, ValidationState};
use crate::statement::{BeliefId, Statement, StatementKind, Topic};
use crate::store::{BeliefStatus, KbState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueView {
    pub issue_key: BeliefId,
    pub title: String,
    pub max_severity: Severity,
    pub status: ValidationState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<u32>,
    pub members: BTreeSet<String>,
    pub observed_in_reports: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueOrder {
    /// Ranked issues by rank, then unranked issues by key.
    #[default]
    Rank,
    /// By issue key only.
    Key,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueFilter {
    pub status: Option<ValidationState>,
    pub min_severity: Option<Severity>,
    #[serde(default)]
    pub order: IssueOrder,
}

impl IssueFilter {
    /// Builds a filter from textual query parameters, rejecting unknown values.
    pub fn parse(status: Option<&str>, min_severity: Option<&str>, order: Option<&str>) -> Result<Self, String> {
        let status = status
            .filter(|s| !s.is_empty())
            .map(|s| ValidationState::parse(s).ok_or_else(|| format!("unknown status '{s}'")))
            .transpose()?;
        let min_severity = min_severity
            .filter(|s| !s.is_empty())
            .map(|s| Severity::parse_lenient(s).ok_or_else(|| format!("unknown severity '{s}'")))
            .transpose()?;
        let order = match order.filter(|s| !s.is_empty()) {
            None | Some("rank") => IssueOrder::Rank,
            Some("key") => IssueOrder::Key,
            Some(other) => return Err(format!("unknown order '{other}'")),
        };
        Ok(IssueFilter {
            status,
            min_severity,
            order,
        })
    }
}

/// Active issues as shown to users. Deterministic for a given state.
pub fn issue_views(state: &KbState, filter: &IssueFilter) -> Vec<IssueView> {
    let mut views: Vec<IssueView> = state
        .active(StatementKind::IssueExists)
        .filter_map(|b| {
            let issue = b.statement.as_issue()?;
            Some(issue_view(state, &b.id, &issue.canonical_finding, &issue.members))
        })
        .filter(|v| filter.status.is_none_or(|s| s == v.status))
        .filter(|v| filter.min_severity.is_none_or(|s| v.max_severity >= s))
        .collect();
    match filter.order {
        IssueOrder::Rank => views.sort_by(|a, b| {
            let ka = (a.rank.is_none(), a.rank, &a.issue_key);
            let kb = (b.rank.is_none(), b.rank, &b.issue_key);
            ka.cmp(&kb)
        }),
        IssueOrder::Key => views.sort_by(|a, b| a.issue_key.cmp(&b.issue_key)),
    }
    views
}

fn issue_view(state: &KbState, id: &BeliefId, canonical: &str, members: &BTreeSet<String>) -> IssueView {
    let mut max_severity = Severity::Info;
    let mut reports = BTreeSet::new();
    for m in members {
        for obs in state.observations_of(m) {
            if let Some(f) = state.get(obs).and_then(|b| b.statement.as_finding()) {
                max_severity = max_severity.max(f.severity);
                reports.insert(f.report_ref.clone());
            }
        }
    }
    let title = state
        .observations_of(canonical)
        .iter()
        .find_map(|obs| state.get(obs).and_then(|b| b.statement.as_finding()))
        .map(|f| f.title.clone())
        .unwrap_or_default();

    let mut status = None;
    let mut priority = None;
    for topic in [Topic::Validation { issue: id.clone() }, Topic::Priority { issue: id.clone() }] {
        for member in state.topic_members(&topic) {
            match state.get(member).map(|b| &b.statement) {
                Some(Statement::ValidationStatus(v)) => {
                    status = status.max(Some(v.status));
                }
                Some(Statement::PriorityAssigned(p)) => {
                    priority = Some((p.score, p.rank));
                }
                _ => {}
            }
        }
    }
    IssueView {
        issue_key: id.clone(),
        title,
        max_severity,
        status: status.unwrap_or(ValidationState::Unreviewed),
        score: priority.map(|p| p.0),
        rank: priority.map(|p| p.1),
        members: members.clone(),
        observed_in_reports: reports.len(),
    }
}

/// One node of an explanation: a belief and, for derived beliefs, the rule
/// and premises behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JustificationTree {
    pub belief: BeliefId,
    pub kind: StatementKind,
    pub active: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retracted_reason: Option<String>,
    pub statement: Statement,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<SourceRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_version: Option<u32>,
    /// Justifications other than the one expanded here.
    #[serde(default)]
    pub alternative_justifications: usize,
    pub children: Vec<JustificationTree>,
}

impl JustificationTree {
    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(JustificationTree::depth).max().unwrap_or(0)
    }

    /// Indented text rendering, one belief per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out, 0);
        out
    }

    fn render_into(&self, out: &mut String, indent: usize) {
        use std::fmt::Write;
        let marker = if self.active { "" } else { " [retracted]" };
        let _ = write!(out, "{}{} {}{}", "  ".repeat(indent), self.kind, self.belief, marker);
        match (&self.rule_id, self.rule_version) {
            (Some(rule), Some(v)) => {
                let _ = write!(out, "  <- {rule} v{v}");
            }
            _ => {
                let sources: Vec<String> = self
                    .sources
                    .iter()
                    .map(|s| format!("{:?}:{}", s.source_kind, s.source_id))
                    .collect();
                let _ = write!(out, "  <- {}", sources.join(", "));
            }
        }
        out.push('\n');
        for child in &self.children {
            child.render_into(out, indent + 1);
        }
    }
}

/// Explanation tree for any known belief, Active or Retracted.
pub fn justification_tree(state: &KbState, id: &BeliefId) -> Option<JustificationTree> {
    let belief = state.get(id)?;
    let retracted_reason = match &belief.status {
        BeliefStatus::Active => None,
        BeliefStatus::Retracted { reason, .. } => Some(reason.clone()),
    };
    let sources: Vec<SourceRef> = belief.explicit_sources().map(|(s, _)| s.clone()).collect();
    let justifications = state.justifications_of(id);
    // Prefer a justification whose premises all still hold.
    let chosen = if sources.is_empty() {
        justifications
            .iter()
            .find(|j| state.justification_is_live(j))
            .or(justifications.first())
            .copied()
    } else {
        None
    };
    let children = chosen
        .map(|j| {
            j.premises
                .iter()
                .filter_map(|p| justification_tree(state, p))
                .collect()
        })
        .unwrap_or_default();
    Some(JustificationTree {
        belief: id.clone(),
        kind: belief.kind(),
        active: belief.is_active(),
        retracted_reason,
        statement: belief.statement.clone(),
        sources,
        rule_id: chosen.map(|j| j.rule_id.clone()),
        rule_version: chosen.map(|j| j.rule_version),
        alternative_justifications: if chosen.is_some() { justifications.len() - 1 } else { 0 },
        children,
    })
}
