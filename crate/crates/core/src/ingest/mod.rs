//! Report parsing: SARIF, a generic JSON schema and dependency-scan lists,
//! normalized into [`Finding`]s.
//!
//! A report either parses as a whole or is rejected. Within a report, an entry
//! that cannot be normalized is skipped and counted; its siblings are kept.

mod dependency;
mod generic;
mod sarif;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::IngestError;
use crate::model::{Finding, ReportFormat, ReportRef, Timestamp};

pub use dependency::parse_dependency_list;
pub use generic::parse_generic;
pub use sarif::parse_sarif;

/// A report as received, before any parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawReport {
    pub bytes: Vec<u8>,
    pub declared_format: Option<ReportFormat>,
    pub tool_hint: Option<String>,
    pub received_at: Timestamp,
    pub pipeline_run_id: String,
}

impl RawReport {
    pub fn new(bytes: impl Into<Vec<u8>>, pipeline_run_id: impl Into<String>, received_at: Timestamp) -> Self {
        RawReport {
            bytes: bytes.into(),
            declared_format: None,
            tool_hint: None,
            received_at,
            pipeline_run_id: pipeline_run_id.into(),
        }
    }

    pub fn with_format(mut self, format: ReportFormat) -> Self {
        self.declared_format = Some(format);
        self
    }

    pub fn with_tool_hint(mut self, tool: impl Into<String>) -> Self {
        self.tool_hint = Some(tool.into());
        self
    }

    pub fn report_ref(&self) -> ReportRef {
        ReportRef {
            pipeline_run_id: self.pipeline_run_id.clone(),
            report_hash: report_hash(&self.bytes),
        }
    }
}

/// First 128 bits of the SHA-256 of the raw bytes, hex encoded.
pub fn report_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..16])
}

/// An entry that was dropped while its siblings were kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedEntry {
    /// JSON path of the entry, e.g. `findings[3]`.
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    pub report_ref: ReportRef,
    pub tool_name: String,
    pub format: ReportFormat,
    pub findings: Vec<Finding>,
    pub skipped: Vec<SkippedEntry>,
}

fn parse_json(bytes: &[u8]) -> Result<Value, IngestError> {
    serde_json::from_slice(bytes).map_err(|e| IngestError::MalformedReport {
        path: "$".into(),
        reason: e.to_string(),
    })
}

/// The declared format if there is one, otherwise a guess from the top-level keys.
pub fn detect_format(raw: &RawReport) -> Result<ReportFormat, IngestError> {
    if let Some(format) = raw.declared_format {
        return Ok(format);
    }
    let unknown = || IngestError::UnknownFormat("expected a SARIF, generic findings or dependency list JSON document".into());
    let value: Value = serde_json::from_slice(&raw.bytes).map_err(|_| unknown())?;
    let Some(obj) = value.as_object() else { return Err(unknown()) };
    let is_array = |key: &str| obj.get(key).is_some_and(Value::is_array);
    if obj.contains_key("runs") && (obj.contains_key("$schema") || obj.contains_key("version")) {
        Ok(ReportFormat::Sarif)
    } else if is_array("findings") {
        Ok(ReportFormat::GenericJson)
    } else if is_array("dependencies") {
        Ok(ReportFormat::DependencyList)
    } else {
        Err(unknown())
    }
}

/// Parses a raw report into normalized findings.
pub fn parse_report(raw: &RawReport) -> Result<ParsedReport, IngestError> {
    if raw.bytes.is_empty() {
        return Err(IngestError::InvalidRawReport("empty report".into()));
    }
    if raw.pipeline_run_id.trim().is_empty() {
        return Err(IngestError::InvalidRawReport("pipeline_run_id is required".into()));
    }
    let format = detect_format(raw)?;
    let value = parse_json(&raw.bytes)?;
    let report_ref = raw.report_ref();
    let hint = raw.tool_hint.as_deref();
    let (tool_name, findings, skipped) = match format {
        ReportFormat::Sarif => sarif::parse_sarif(&value, hint, &report_ref)?,
        ReportFormat::GenericJson => generic::parse_generic(&value, hint, &report_ref)?,
        ReportFormat::DependencyList => dependency::parse_dependency_list(&value, hint, &report_ref)?,
    };
    Ok(ParsedReport {
        report_ref,
        tool_name,
        format,
        findings,
        skipped,
    })
}

pub(crate) type Parsed = (String, Vec<Finding>, Vec<SkippedEntry>);

pub(crate) fn malformed(path: impl Into<String>, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedReport {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Top-level `tool` string, falling back to the caller's hint.
pub(crate) fn tool_name(value: &Value, hint: Option<&str>) -> Result<String, IngestError> {
    match value.get("tool") {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_string()),
        Some(Value::String(_)) | None => hint
            .map(str::trim)
            .filter(|h| !h.is_empty())
            .map(str::to_string)
            .ok_or_else(|| malformed("tool", "missing tool name")),
        Some(_) => Err(malformed("tool", "expected a string")),
    }
}

pub(crate) fn array<'v>(value: &'v Value, key: &str) -> Result<&'v Vec<Value>, IngestError> {
    match value.get(key) {
        Some(Value::Array(items)) => Ok(items),
        Some(_) => Err(malformed(key, "expected an array")),
        None => Err(malformed(key, "missing")),
    }
}

/// Check id derived from a title when a tool gives none.
pub(crate) fn slug(text: &str) -> String {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("-")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(text: &str) -> RawReport {
        RawReport::new(text.as_bytes().to_vec(), "run-1", 0)
    }

    #[test]
    fn sniffing() {
        assert_eq!(detect_format(&raw(r#"{"version":"2.1.0","runs":[]}"#)), Ok(ReportFormat::Sarif));
        assert_eq!(detect_format(&raw(r#"{"$schema":"x","runs":[]}"#)), Ok(ReportFormat::Sarif));
        assert_eq!(detect_format(&raw(r#"{"findings":[]}"#)), Ok(ReportFormat::GenericJson));
        assert_eq!(detect_format(&raw(r#"{"dependencies":[]}"#)), Ok(ReportFormat::DependencyList));
        assert!(matches!(detect_format(&raw("hello")), Err(IngestError::UnknownFormat(_))));
        assert!(matches!(detect_format(&raw(r#"{"runs":[]}"#)), Err(IngestError::UnknownFormat(_))));
    }

    #[test]
    fn declared_format_wins() {
        let r = raw("hello").with_format(ReportFormat::GenericJson);
        assert_eq!(detect_format(&r), Ok(ReportFormat::GenericJson));
        assert!(matches!(parse_report(&r), Err(IngestError::MalformedReport { .. })));
    }

    #[test]
    fn raw_report_invariants() {
        assert!(matches!(parse_report(&raw("")), Err(IngestError::InvalidRawReport(_))));
        let mut r = raw(r#"{"findings":[]}"#);
        r.pipeline_run_id = " ".into();
        assert!(matches!(parse_report(&r), Err(IngestError::InvalidRawReport(_))));
    }

    #[test]
    fn report_hash_is_truncated_sha256() {
        assert_eq!(report_hash(b"abc"), "ba7816bf8f01cfea414140de5dae2223");
    }

    #[test]
    fn slug_normalizes_titles() {
        assert_eq!(slug("SQL Injection: /login!"), "sql-injection-login");
    }
}
