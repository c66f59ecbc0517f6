//! Statements held as belief, and their content-addressed identifiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::KbError;
use crate::model::{
    Assessment, Finding, FindingPair, IssueMembership, IssueRecord, Priority, ReportIngested,
    Validation,
};

/// SHA-256 over `(kind, canonical payload)`, truncated to 128 bits, lowercase hex.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeliefId(String);

impl BeliefId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub(crate) fn from_digest(bytes: &[u8]) -> Self {
        BeliefId(hex::encode(&bytes[..16]))
    }
}

impl fmt::Display for BeliefId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for BeliefId {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let well_formed = s.len() == 32 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        if well_formed {
            Ok(BeliefId(s.to_string()))
        } else {
            Err(KbError::SchemaViolation(format!("malformed belief id '{s}'")))
        }
    }
}

/// Statement kinds in pipeline order; the derive order is relied on when
/// applying a rule's outputs (an issue before its memberships, and so on).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StatementKind {
    ReportIngested,
    FindingObserved,
    DuplicateOf,
    IssueExists,
    IssueMember,
    ValidationStatus,
    PriorityAssigned,
    AssessmentMade,
}

impl StatementKind {
    pub const ALL: [StatementKind; 8] = [
        StatementKind::ReportIngested,
        StatementKind::FindingObserved,
        StatementKind::DuplicateOf,
        StatementKind::IssueExists,
        StatementKind::IssueMember,
        StatementKind::ValidationStatus,
        StatementKind::PriorityAssigned,
        StatementKind::AssessmentMade,
    ];

    /// Kinds that only ever enter the KB from outside.
    pub fn is_explicit_input(self) -> bool {
        matches!(
            self,
            StatementKind::ReportIngested
                | StatementKind::FindingObserved
                | StatementKind::AssessmentMade
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StatementKind::ReportIngested => "ReportIngested",
            StatementKind::FindingObserved => "FindingObserved",
            StatementKind::DuplicateOf => "DuplicateOf",
            StatementKind::IssueExists => "IssueExists",
            StatementKind::IssueMember => "IssueMember",
            StatementKind::ValidationStatus => "ValidationStatus",
            StatementKind::PriorityAssigned => "PriorityAssigned",
            StatementKind::AssessmentMade => "AssessmentMade",
        }
    }
}

impl fmt::Display for StatementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StatementKind {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StatementKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| KbError::SchemaViolation(format!("unknown statement kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Statement {
    ReportIngested(ReportIngested),
    FindingObserved(Finding),
    DuplicateOf(FindingPair),
    IssueExists(IssueRecord),
    IssueMember(IssueMembership),
    ValidationStatus(Validation),
    PriorityAssigned(Priority),
    AssessmentMade(Assessment),
}

/// The key two statements must share to be in conflict.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "topic", rename_all = "snake_case")]
pub enum Topic {
    Validation { issue: BeliefId },
    Duplicate { pair: FindingPair },
    Priority { issue: BeliefId },
}

impl Statement {
    pub fn kind(&self) -> StatementKind {
        match self {
            Statement::ReportIngested(_) => StatementKind::ReportIngested,
            Statement::FindingObserved(_) => StatementKind::FindingObserved,
            Statement::DuplicateOf(_) => StatementKind::DuplicateOf,
            Statement::IssueExists(_) => StatementKind::IssueExists,
            Statement::IssueMember(_) => StatementKind::IssueMember,
            Statement::ValidationStatus(_) => StatementKind::ValidationStatus,
            Statement::PriorityAssigned(_) => StatementKind::PriorityAssigned,
            Statement::AssessmentMade(_) => StatementKind::AssessmentMade,
        }
    }

    fn payload_value(&self) -> Value {
        let v = match self {
            Statement::ReportIngested(p) => serde_json::to_value(p),
            Statement::FindingObserved(p) => serde_json::to_value(p),
            Statement::DuplicateOf(p) => serde_json::to_value(p),
            Statement::IssueExists(p) => serde_json::to_value(p),
            Statement::IssueMember(p) => serde_json::to_value(p),
            Statement::ValidationStatus(p) => serde_json::to_value(p),
            Statement::PriorityAssigned(p) => serde_json::to_value(p),
            Statement::AssessmentMade(p) => serde_json::to_value(p),
        };
        // Plain data records; serialization cannot fail.
        v.expect("statement payloads serialize to JSON")
    }

    /// Compact JSON with object keys sorted at every level.
    pub fn canonical_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(256);
        write_canonical(&self.payload_value(), &mut out);
        out
    }

    pub fn id(&self) -> BeliefId {
        let mut hasher = Sha256::new();
        hasher.update(self.kind().as_str().as_bytes());
        hasher.update([0u8]);
        hasher.update(self.canonical_payload());
        BeliefId::from_digest(&hasher.finalize())
    }

    /// Checks the kind-specific payload constraints.
    pub fn validate(&self) -> Result<(), KbError> {
        let bad = |msg: String| Err(KbError::SchemaViolation(format!("{}: {msg}", self.kind())));
        match self {
            Statement::ReportIngested(r) => {
                if r.report_ref.pipeline_run_id.is_empty() || r.report_ref.report_hash.is_empty() {
                    return bad("report_ref must name a pipeline run and a report hash".into());
                }
            }
            Statement::FindingObserved(f) => {
                if f.finding_key.is_empty() {
                    return bad("empty finding_key".into());
                }
                if !f.location.is_anchored() {
                    return bad("location needs a path, endpoint or component".into());
                }
                if f.location.line == Some(0) {
                    return bad("line numbers start at 1".into());
                }
            }
            Statement::DuplicateOf(p) => {
                if p.a >= p.b {
                    return bad("pair must be ordered with a < b".into());
                }
            }
            Statement::IssueExists(i) => {
                match i.members.iter().next() {
                    None => return bad("an issue needs at least one member".into()),
                    Some(first) if *first != i.canonical_finding => {
                        return bad("canonical_finding must be the smallest member key".into())
                    }
                    _ => {}
                }
            }
            Statement::IssueMember(m) => {
                if m.finding_key.is_empty() {
                    return bad("empty finding_key".into());
                }
            }
            Statement::ValidationStatus(_) => {}
            Statement::PriorityAssigned(p) => {
                if !p.score.is_finite() || p.score < 0.0 {
                    return bad(format!("score must be finite and non-negative, got {}", p.score));
                }
                if p.rank == 0 {
                    return bad("rank starts at 1".into());
                }
            }
            Statement::AssessmentMade(a) => {
                if !a.author.is_human() {
                    return bad("assessments must be authored by a human expert".into());
                }
                if let Some(pair) = a.verdict.not_duplicate_pair() {
                    if pair.a == pair.b {
                        return bad("not_duplicate needs two distinct findings".into());
                    }
                }
            }
        }
        Ok(())
    }

    /// Conflict topic, for the kinds covered by the incompatibility table.
    pub fn topic(&self) -> Option<Topic> {
        match self {
            Statement::ValidationStatus(v) => Some(Topic::Validation {
                issue: v.issue.clone(),
            }),
            Statement::PriorityAssigned(p) => Some(Topic::Priority {
                issue: p.issue.clone(),
            }),
            Statement::DuplicateOf(pair) => Some(Topic::Duplicate { pair: pair.clone() }),
            Statement::AssessmentMade(a) => a
                .verdict
                .not_duplicate_pair()
                .map(|pair| Topic::Duplicate { pair }),
            _ => None,
        }
    }

    /// Whether two statements on the same topic cannot both hold.
    pub fn incompatible_with(&self, other: &Statement) -> bool {
        match (self, other) {
            (Statement::ValidationStatus(a), Statement::ValidationStatus(b)) => {
                a.issue == b.issue && a.status != b.status
            }
            (Statement::PriorityAssigned(a), Statement::PriorityAssigned(b)) => {
                a.issue == b.issue && a.score.to_bits() != b.score.to_bits()
            }
            (Statement::DuplicateOf(pair), Statement::AssessmentMade(a))
            | (Statement::AssessmentMade(a), Statement::DuplicateOf(pair)) => {
                a.verdict.not_duplicate_pair().as_ref() == Some(pair)
            }
            _ => false,
        }
    }

    pub fn as_finding(&self) -> Option<&Finding> {
        match self {
            Statement::FindingObserved(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_issue(&self) -> Option<&IssueRecord> {
        match self {
            Statement::IssueExists(i) => Some(i),
            _ => None,
        }
    }

    pub fn as_assessment(&self) -> Option<&Assessment> {
        match self {
            Statement::AssessmentMade(a) => Some(a),
            _ => None,
        }
    }

    /// Field view used by query patterns; `None` when the field is absent.
    pub fn field(&self, name: &str) -> Option<String> {
        let value = self.payload_value();
        let mut cursor = &value;
        for part in name.split('.') {
            cursor = cursor.get(part)?;
        }
        match cursor {
            Value::String(s) => Some(s.clone()),
            Value::Null => None,
            other => Some(other.to_string()),
        }
    }
}

fn write_canonical(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push(b'{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                // Strings and numbers use serde_json's compact form.
                out.extend_from_slice(serde_json::to_string(key).unwrap_or_default().as_bytes());
                out.push(b':');
                write_canonical(&map[key], out);
            }
            out.push(b'}');
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_canonical(item, out);
            }
            out.push(b']');
        }
        scalar => out.extend_from_slice(scalar.to_string().as_bytes()),
    }
}
