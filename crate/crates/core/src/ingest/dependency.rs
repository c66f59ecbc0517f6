use std::collections::BTreeSet;

use serde_json::Value;

use super::{array, malformed, tool_name, Parsed, SkippedEntry};
use crate::error::IngestError;
use crate::model::{Finding, Location, ReportRef, Severity, ToolCategory};

fn text<'v>(value: &'v Value, key: &str) -> Option<&'v str> {
    value.get(key).and_then(Value::as_str).map(str::trim).filter(|s| !s.is_empty())
}

fn parse_vuln(vuln: &Value, component: &str, tool: &str, report_ref: &ReportRef) -> Result<Finding, String> {
    let id = text(vuln, "id").ok_or("missing id")?;
    let raw_severity = text(vuln, "severity").ok_or("missing severity")?;
    let severity =
        Severity::parse_lenient(raw_severity).ok_or_else(|| format!("unknown severity '{raw_severity}'"))?;
    let location = Location {
        component: Some(component.to_string()),
        ..Location::default()
    };
    Ok(Finding {
        finding_key: Finding::make_key(tool, id, &location),
        title: format!("{id} in {component}"),
        description: text(vuln, "summary").unwrap_or_default().to_string(),
        severity,
        location,
        identifiers: BTreeSet::from([id.to_string()]),
        tool_name: tool.to_string(),
        tool_category: ToolCategory::Vst,
        report_ref: report_ref.clone(),
    })
}

/// Parses `{"tool", "dependencies": [{"component", "version", "vulns": [...]}]}`,
/// one finding per (component, vulnerability).
pub fn parse_dependency_list(value: &Value, hint: Option<&str>, report_ref: &ReportRef) -> Result<Parsed, IngestError> {
    if !value.is_object() {
        return Err(malformed("$", "expected a JSON object"));
    }
    let tool = tool_name(value, hint)?;
    let mut findings = Vec::new();
    let mut skipped = Vec::new();
    for (d, dep) in array(value, "dependencies")?.iter().enumerate() {
        let path = format!("dependencies[{d}]");
        let (Some(name), Some(version)) = (text(dep, "component"), text(dep, "version")) else {
            skipped.push(SkippedEntry {
                path,
                reason: "needs component and version".into(),
            });
            continue;
        };
        let component = format!("{name}@{version}");
        let vulns = match dep.get("vulns") {
            None | Some(Value::Null) => continue,
            Some(Value::Array(v)) => v,
            Some(_) => {
                skipped.push(SkippedEntry {
                    path: format!("{path}.vulns"),
                    reason: "expected an array".into(),
                });
                continue;
            }
        };
        for (v, vuln) in vulns.iter().enumerate() {
            match parse_vuln(vuln, &component, &tool, report_ref) {
                Ok(f) => findings.push(f),
                Err(reason) => skipped.push(SkippedEntry {
                    path: format!("{path}.vulns[{v}]"),
                    reason,
                }),
            }
        }
    }
    Ok((tool, findings, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn rr() -> ReportRef {
        ReportRef {
            pipeline_run_id: "r".into(),
            report_hash: "h".into(),
        }
    }

    #[test]
    fn one_finding_per_vulnerability() {
        let v = json!({"tool": "dep", "dependencies": [
            {"component": "libfoo", "version": "1.2", "vulns": [
                {"id": "CVE-2021-0001", "severity": "High", "summary": "overflow"},
                {"id": "CVE-2021-0002", "severity": "low", "summary": "leak"}
            ]},
            {"component": "libbar", "version": "2.0", "vulns": []}
        ]});
        let (_, findings, skipped) = parse_dependency_list(&v, None, &rr()).unwrap();
        assert!(skipped.is_empty());
        assert_eq!(findings.len(), 2);
        assert_eq!(findings[0].location.component.as_deref(), Some("libfoo@1.2"));
        assert_eq!(findings[0].identifiers, BTreeSet::from(["CVE-2021-0001".to_string()]));
        assert_eq!(findings[0].finding_key, "dep:CVE-2021-0001:libfoo@1.2");
        assert_eq!(findings[1].severity, Severity::Low);
    }

    #[test]
    fn bad_vuln_is_skipped_alone() {
        let v = json!({"tool": "dep", "dependencies": [
            {"component": "libfoo", "version": "1.2", "vulns": [{"severity": "High"}, {"id": "CVE-1", "severity": "High"}]}
        ]});
        let (_, findings, skipped) = parse_dependency_list(&v, None, &rr()).unwrap();
        assert_eq!(findings.len(), 1);
        assert_eq!(skipped[0].path, "dependencies[0].vulns[0]");
    }
}
