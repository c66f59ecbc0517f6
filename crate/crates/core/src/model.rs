//! Payload records carried by statements: findings, issues, assessments.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::statement::BeliefId;

/// Milliseconds since the Unix epoch, UTC. Always supplied by the caller.
pub type Timestamp = i64;

/// Canonical severity scale. Ordered from least to most severe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Low,
    Medium,
    High,
    Critical,
}

impl Severity {
    pub const ALL: [Severity; 5] = [
        Severity::Info,
        Severity::Low,
        Severity::Medium,
        Severity::High,
        Severity::Critical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Low => "low",
            Severity::Medium => "medium",
            Severity::High => "high",
            Severity::Critical => "critical",
        }
    }

    /// Case-insensitive lookup over canonical names and known synonyms.
    pub fn parse_lenient(raw: &str) -> Option<Severity> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "critical" | "blocker" => Some(Severity::Critical),
            "high" | "major" => Some(Severity::High),
            "medium" | "moderate" => Some(Severity::Medium),
            "low" | "minor" => Some(Severity::Low),
            "info" | "informational" | "note" => Some(Severity::Info),
            _ => None,
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Severity::parse_lenient(s).ok_or_else(|| format!("unknown severity '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ToolCategory {
    #[serde(rename = "SAST")]
    Sast,
    #[serde(rename = "DAST")]
    Dast,
    #[serde(rename = "VST")]
    Vst,
}

impl ToolCategory {
    pub fn parse(raw: &str) -> Option<ToolCategory> {
        match raw.trim().to_ascii_uppercase().as_str() {
            "SAST" => Some(ToolCategory::Sast),
            "DAST" => Some(ToolCategory::Dast),
            "VST" => Some(ToolCategory::Vst),
            _ => None,
        }
    }
}

/// Identifies one ingested report: the pipeline run plus a hash of the raw bytes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReportRef {
    pub pipeline_run_id: String,
    pub report_hash: String,
}

impl fmt::Display for ReportRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.pipeline_run_id, self.report_hash)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Location {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// `name@version` for third-party components.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<String>,
}

impl Location {
    pub fn is_anchored(&self) -> bool {
        self.path.is_some() || self.endpoint.is_some() || self.component.is_some()
    }

    /// Key fragment used in `finding_key`.
    pub fn key(&self) -> String {
        if let Some(path) = &self.path {
            match self.line {
                Some(line) => format!("{path}:{line}"),
                None => path.clone(),
            }
        } else if let Some(endpoint) = &self.endpoint {
            endpoint.clone()
        } else {
            self.component.clone().unwrap_or_default()
        }
    }
}

/// One normalized observation parsed from a tool report.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Finding {
    pub finding_key: String,
    pub title: String,
    pub description: String,
    pub severity: Severity,
    pub location: Location,
    pub identifiers: BTreeSet<String>,
    pub tool_name: String,
    pub tool_category: ToolCategory,
    pub report_ref: ReportRef,
}

impl Finding {
    /// `tool:check:location`. Severity and description are deliberately excluded.
    pub fn make_key(tool_name: &str, check_id: &str, location: &Location) -> String {
        format!("{}:{}:{}", tool_name, check_id, location.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Sarif,
    GenericJson,
    DependencyList,
}

impl ReportFormat {
    pub fn parse(raw: &str) -> Option<ReportFormat> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "sarif" => Some(ReportFormat::Sarif),
            "generic" | "generic_json" | "genericjson" | "json" => Some(ReportFormat::GenericJson),
            "dependency" | "dependencies" | "dependency_list" | "dependencylist" => {
                Some(ReportFormat::DependencyList)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReportIngested {
    pub report_ref: ReportRef,
    pub tool_name: String,
    pub format: ReportFormat,
    pub findings: u32,
    pub skipped: u32,
}

/// Unordered finding pair, stored with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FindingPair {
    pub a: String,
    pub b: String,
}

impl FindingPair {
    pub fn new(x: impl Into<String>, y: impl Into<String>) -> Self {
        let (x, y) = (x.into(), y.into());
        if x <= y {
            FindingPair { a: x, b: y }
        } else {
            FindingPair { a: y, b: x }
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.a == key || self.b == key
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IssueRecord {
    pub canonical_finding: String,
    pub members: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IssueMembership {
    pub issue: BeliefId,
    pub finding_key: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationState {
    Unreviewed,
    FalsePositive,
    Confirmed,
    Mitigated,
}

impl ValidationState {
    pub fn as_str(self) -> &'static str {
        match self {
            ValidationState::Unreviewed => "unreviewed",
            ValidationState::FalsePositive => "false_positive",
            ValidationState::Confirmed => "confirmed",
            ValidationState::Mitigated => "mitigated",
        }
    }

    pub fn parse(raw: &str) -> Option<ValidationState> {
        match raw.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "unreviewed" => Some(ValidationState::Unreviewed),
            "false_positive" | "falsepositive" | "fp" => Some(ValidationState::FalsePositive),
            "confirmed" => Some(ValidationState::Confirmed),
            "mitigated" => Some(ValidationState::Mitigated),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Validation {
    pub issue: BeliefId,
    pub status: ValidationState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priority {
    pub issue: BeliefId,
    pub score: f64,
    pub rank: u32,
    pub formula_version: u32,
}

// Scores are finite by schema validation, so bitwise equality is a total equivalence.
impl Eq for Priority {}

impl std::hash::Hash for Priority {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.issue.hash(state);
        self.score.to_bits().hash(state);
        self.rank.hash(state);
        self.formula_version.hash(state);
    }
}

/// What a human assessment is about.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssessmentSubject {
    /// An issue, together with its member findings at the time of assessment.
    /// The assessment keeps applying to any later issue sharing one of these findings.
    Issue {
        issue_key: BeliefId,
        findings: BTreeSet<String>,
    },
    Finding { finding_key: String },
}

impl AssessmentSubject {
    /// Whether this subject refers to the issue with `issue_key` and `members`.
    pub fn targets_issue(&self, issue_key: &BeliefId, members: &BTreeSet<String>) -> bool {
        match self {
            AssessmentSubject::Issue {
                issue_key: key,
                findings,
            } => key == issue_key || findings.iter().any(|f| members.contains(f)),
            AssessmentSubject::Finding { finding_key } => members.contains(finding_key),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    FalsePositive,
    Confirmed,
    Mitigated,
    SeverityOverride { level: Severity },
    NotDuplicate { a: String, b: String },
}

impl Verdict {
    /// The validation status this verdict establishes, if any.
    pub fn status(&self) -> Option<ValidationState> {
        match self {
            Verdict::FalsePositive => Some(ValidationState::FalsePositive),
            Verdict::Confirmed => Some(ValidationState::Confirmed),
            Verdict::Mitigated => Some(ValidationState::Mitigated),
            _ => None,
        }
    }

    pub fn not_duplicate_pair(&self) -> Option<FindingPair> {
        match self {
            Verdict::NotDuplicate { a, b } => Some(FindingPair::new(a.clone(), b.clone())),
            _ => None,
        }
    }

    /// Parses the compact textual form used on the command line:
    /// `false-positive`, `confirmed`, `mitigated`, `severity=<level>`, `not-duplicate=<a>,<b>`.
    pub fn parse_compact(raw: &str) -> Result<Verdict, String> {
        let raw = raw.trim();
        let (head, arg) = match raw.split_once('=') {
            Some((h, a)) => (h, Some(a)),
            None => (raw, None),
        };
        let head = head.to_ascii_lowercase().replace('_', "-");
        match (head.as_str(), arg) {
            ("false-positive" | "fp", None) => Ok(Verdict::FalsePositive),
            ("confirmed", None) => Ok(Verdict::Confirmed),
            ("mitigated", None) => Ok(Verdict::Mitigated),
            ("severity" | "severity-override", Some(level)) => Ok(Verdict::SeverityOverride {
                level: level.parse()?,
            }),
            ("not-duplicate", Some(pair)) => {
                let (a, b) = pair
                    .split_once(',')
                    .ok_or_else(|| "not-duplicate expects '<a>,<b>'".to_string())?;
                Ok(Verdict::NotDuplicate {
                    a: a.trim().to_string(),
                    b: b.trim().to_string(),
                })
            }
            _ => Err(format!("unknown verdict '{raw}'")),
        }
    }
}

/// Source of an explicit belief.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceKind {
    ToolReport,
    HumanExpert,
    ExternalFeed,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceRef {
    pub source_kind: SourceKind,
    pub source_id: String,
}

impl SourceRef {
    pub fn tool_report(id: impl Into<String>) -> Self {
        SourceRef {
            source_kind: SourceKind::ToolReport,
            source_id: id.into(),
        }
    }

    pub fn human(id: impl Into<String>) -> Self {
        SourceRef {
            source_kind: SourceKind::HumanExpert,
            source_id: id.into(),
        }
    }

    pub fn feed(id: impl Into<String>) -> Self {
        SourceRef {
            source_kind: SourceKind::ExternalFeed,
            source_id: id.into(),
        }
    }

    pub fn is_human(&self) -> bool {
        self.source_kind == SourceKind::HumanExpert
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assessment {
    pub subject: AssessmentSubject,
    pub verdict: Verdict,
    pub author: SourceRef,
    #[serde(default)]
    pub rationale: String,
    pub at: Timestamp,
}
