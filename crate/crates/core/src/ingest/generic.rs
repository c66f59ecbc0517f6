use std::collections::BTreeSet;

use serde_json::Value;

use super::{array, malformed, slug, tool_name, Parsed, SkippedEntry};
use crate::error::IngestError;
use crate::model::{Finding, Location, ReportRef, Severity, ToolCategory};

fn string_field(entry: &Value, key: &str) -> Result<Option<String>, String> {
    match entry.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) if s.trim().is_empty() => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.trim().to_string())),
        Some(_) => Err(format!("{key} must be a string")),
    }
}

fn parse_entry(entry: &Value, tool: &str, category: ToolCategory, report_ref: &ReportRef) -> Result<Finding, String> {
    if !entry.is_object() {
        return Err("expected an object".into());
    }
    let title = string_field(entry, "title")?.ok_or("missing title")?;
    let description = string_field(entry, "description")?.unwrap_or_default();
    let raw_severity = string_field(entry, "severity")?.ok_or("missing severity")?;
    let severity =
        Severity::parse_lenient(&raw_severity).ok_or_else(|| format!("unknown severity '{raw_severity}'"))?;
    let line = match entry.get("line") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .and_then(|l| u32::try_from(l).ok())
                .filter(|l| *l >= 1)
                .ok_or("line must be a positive integer")?,
        ),
    };
    let location = Location {
        path: string_field(entry, "path")?,
        line,
        endpoint: string_field(entry, "endpoint")?,
        component: string_field(entry, "component")?,
    };
    if !location.is_anchored() {
        return Err("needs one of path, endpoint or component".into());
    }
    let identifiers: BTreeSet<String> = match entry.get("ids") {
        None | Some(Value::Null) => BTreeSet::new(),
        Some(Value::Array(ids)) => ids
            .iter()
            .map(|v| v.as_str().map(|s| s.trim().to_string()).ok_or("ids must be strings"))
            .collect::<Result<_, _>>()?,
        Some(_) => return Err("ids must be an array".into()),
    };
    let check = match string_field(entry, "check")? {
        Some(c) => c,
        None => entry
            .get("ids")
            .and_then(Value::as_array)
            .and_then(|ids| ids.first())
            .and_then(Value::as_str)
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| slug(&title)),
    };
    Ok(Finding {
        finding_key: Finding::make_key(tool, &check, &location),
        title,
        description,
        severity,
        location,
        identifiers,
        tool_name: tool.to_string(),
        tool_category: category,
        report_ref: report_ref.clone(),
    })
}

/// Parses `{"tool", "category", "findings": [...]}`. Entries with an unknown
/// severity or no location are skipped.
pub fn parse_generic(value: &Value, hint: Option<&str>, report_ref: &ReportRef) -> Result<Parsed, IngestError> {
    if !value.is_object() {
        return Err(malformed("$", "expected a JSON object"));
    }
    let tool = tool_name(value, hint)?;
    let category = match value.get("category") {
        Some(Value::String(s)) => {
            ToolCategory::parse(s).ok_or_else(|| malformed("category", format!("unknown category '{s}'")))?
        }
        Some(_) => return Err(malformed("category", "expected a string")),
        None => return Err(malformed("category", "missing")),
    };
    let entries = array(value, "findings")?;
    let mut findings = Vec::new();
    let mut skipped = Vec::new();
    for (i, entry) in entries.iter().enumerate() {
        match parse_entry(entry, &tool, category, report_ref) {
            Ok(f) => findings.push(f),
            Err(reason) => skipped.push(SkippedEntry {
                path: format!("findings[{i}]"),
                reason,
            }),
        }
    }
    Ok((tool, findings, skipped))
}
