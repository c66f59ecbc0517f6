use std::collections::BTreeSet;

use serde_json::Value;

use super::{array, malformed, slug, Parsed, SkippedEntry};
use crate::error::IngestError;
use crate::model::{Finding, Location, ReportRef, Severity, ToolCategory};

fn level_severity(level: Option<&str>) -> Option<Severity> {
    match level {
        Some("error") => Some(Severity::High),
        Some("warning") => Some(Severity::Medium),
        Some("note") => Some(Severity::Low),
        Some("none") | None => Some(Severity::Info),
        Some(_) => None,
    }
}

fn location(result: &Value) -> Option<Location> {
    let physical = result.pointer("/locations/0/physicalLocation")?;
    let path = physical.pointer("/artifactLocation/uri")?.as_str()?.to_string();
    let line = physical
        .pointer("/region/startLine")
        .and_then(Value::as_u64)
        .and_then(|l| u32::try_from(l).ok())
        .filter(|l| *l >= 1);
    Some(Location {
        path: Some(path),
        line,
        ..Location::default()
    })
}

/// Parses the SARIF 2.1.0 subset: driver name, results with ruleId, message,
/// level and the first physical location.
pub fn parse_sarif(value: &Value, hint: Option<&str>, report_ref: &ReportRef) -> Result<Parsed, IngestError> {
    if !value.is_object() {
        return Err(malformed("$", "expected a JSON object"));
    }
    let runs = array(value, "runs")?;
    let mut report_tool: Option<String> = None;
    let mut findings = Vec::new();
    let mut skipped = Vec::new();

    for (r, run) in runs.iter().enumerate() {
        let tool = match run.pointer("/tool/driver/name").and_then(Value::as_str) {
            Some(name) if !name.trim().is_empty() => name.trim().to_string(),
            _ => match hint {
                Some(h) if !h.trim().is_empty() => h.trim().to_string(),
                _ => return Err(malformed(format!("runs[{r}].tool.driver.name"), "missing")),
            },
        };
        report_tool.get_or_insert_with(|| tool.clone());

        let results = match run.get("results") {
            None | Some(Value::Null) => continue,
            Some(Value::Array(items)) => items,
            Some(_) => return Err(malformed(format!("runs[{r}].results"), "expected an array")),
        };
        for (i, result) in results.iter().enumerate() {
            let path = format!("runs[{r}].results[{i}]");
            let text = result
                .pointer("/message/text")
                .and_then(Value::as_str)
                .ok_or_else(|| malformed(format!("{path}.message.text"), "missing"))?;
            let (title, description) = match text.split_once('\n') {
                Some((first, rest)) => (first.trim().to_string(), rest.trim().to_string()),
                None => (text.trim().to_string(), String::new()),
            };
            let level = result.get("level").and_then(Value::as_str);
            let Some(severity) = level_severity(level) else {
                skipped.push(SkippedEntry {
                    path: format!("{path}.level"),
                    reason: format!("unknown level '{}'", level.unwrap_or_default()),
                });
                continue;
            };
            let Some(location) = location(result) else {
                skipped.push(SkippedEntry {
                    path: format!("{path}.locations"),
                    reason: "no physical location".into(),
                });
                continue;
            };
            let rule_id = result
                .get("ruleId")
                .and_then(Value::as_str)
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().to_string());
            let check = rule_id.clone().unwrap_or_else(|| slug(&title));
            let identifiers: BTreeSet<String> = rule_id.into_iter().collect();
            findings.push(Finding {
                finding_key: Finding::make_key(&tool, &check, &location),
                title,
                description,
                severity,
                location,
                identifiers,
                tool_name: tool.clone(),
                tool_category: ToolCategory::Sast,
                report_ref: report_ref.clone(),
            });
        }
    }

    let tool = match report_tool {
        Some(t) => t,
        None => hint
            .map(str::trim)
            .filter(|h| !h.is_empty())
            .map(str::to_string)
            .ok_or_else(|| malformed("runs", "no run names a tool"))?,
    };
    Ok((tool, findings, skipped))
}
