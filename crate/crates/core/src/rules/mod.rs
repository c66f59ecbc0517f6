//! Built-in triage rules: deduplication, validation and prioritization.

mod dedup;
mod prioritize;
pub mod similarity;
mod validate;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{Rule, RuleCatalog};
use crate::error::{KbError, Result};
use crate::kb::KnowledgeBase;
use crate::model::{Severity, Timestamp};
use crate::statement::StatementKind;
use crate::store::RuleRecord;

pub use dedup::DedupRule;
pub use prioritize::PrioritizeRule;
pub use validate::ValidateRule;

pub const DEDUP: &str = "dedup";
pub const VALIDATE: &str = "validate";
pub const PRIORITIZE: &str = "prioritize";

/// Built-in rule ids in stratum order.
pub const BUILTIN: [&str; 3] = [DEDUP, VALIDATE, PRIORITIZE];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupConfig {
    /// Minimum similarity for two findings to be considered duplicates.
    pub threshold: f64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig { threshold: 0.70 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrioritizeConfig {
    pub weights: BTreeMap<Severity, f64>,
    /// Multiplier applied to confirmed issues.
    pub confirm_boost: f64,
}

impl Default for PrioritizeConfig {
    fn default() -> Self {
        PrioritizeConfig {
            weights: BTreeMap::from([
                (Severity::Critical, 10.0),
                (Severity::High, 7.0),
                (Severity::Medium, 4.0),
                (Severity::Low, 1.0),
                (Severity::Info, 0.1),
            ]),
            confirm_boost: 1.25,
        }
    }
}

impl PrioritizeConfig {
    pub fn weight(&self, severity: Severity) -> f64 {
        self.weights.get(&severity).copied().unwrap_or(0.0)
    }
}

/// Configuration for all built-in rules, as loaded from a rules file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesConfig {
    pub dedup: DedupConfig,
    pub prioritize: PrioritizeConfig,
}

impl RulesConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RulesConfig = serde_json::from_str(text).map_err(|e| KbError::InvalidRuleConfig {
            rule_id: "rules".into(),
            reason: e.to_string(),
        })?;
        dedup_config(&to_value(&config.dedup))?;
        prioritize_config(&to_value(&config.prioritize))?;
        Ok(config)
    }

    /// The config value stored with the rule's registration.
    pub fn for_rule(&self, rule_id: &str) -> serde_json::Value {
        match rule_id {
            DEDUP => to_value(&self.dedup),
            PRIORITIZE => to_value(&self.prioritize),
            _ => serde_json::json!({}),
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("rule config serializes")
}

fn invalid(rule_id: &str, reason: impl Into<String>) -> KbError {
    KbError::InvalidRuleConfig {
        rule_id: rule_id.into(),
        reason: reason.into(),
    }
}

fn parse_config<T: for<'de> Deserialize<'de> + Default>(rule_id: &str, value: &serde_json::Value) -> Result<T> {
    if value.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(value.clone()).map_err(|e| invalid(rule_id, e.to_string()))
}

fn dedup_config(value: &serde_json::Value) -> Result<DedupConfig> {
    let c: DedupConfig = parse_config(DEDUP, value)?;
    if !(c.threshold > 0.0 && c.threshold <= 1.0) {
        return Err(invalid(DEDUP, format!("threshold must lie in (0, 1], got {}", c.threshold)));
    }
    Ok(c)
}

fn prioritize_config(value: &serde_json::Value) -> Result<PrioritizeConfig> {
    let mut c: PrioritizeConfig = parse_config(PRIORITIZE, value)?;
    let defaults = PrioritizeConfig::default();
    for severity in Severity::ALL {
        c.weights.entry(severity).or_insert(defaults.weight(severity));
    }
    if let Some((s, w)) = c.weights.iter().find(|(_, w)| !w.is_finite() || **w < 0.0) {
        return Err(invalid(PRIORITIZE, format!("weight for {s} must be finite and non-negative, got {w}")));
    }
    if !c.confirm_boost.is_finite() || c.confirm_boost <= 0.0 {
        return Err(invalid(PRIORITIZE, format!("confirm_boost must be positive, got {}", c.confirm_boost)));
    }
    Ok(c)
}

fn dedup_factory(record: &RuleRecord) -> Result<Rule> {
    let config = dedup_config(&record.config)?;
    Ok(Rule::new(
        DEDUP,
        record.version,
        1,
        [StatementKind::FindingObserved, StatementKind::AssessmentMade],
        [StatementKind::DuplicateOf, StatementKind::IssueExists, StatementKind::IssueMember],
        to_value(&config),
        Arc::new(DedupRule::new(config.threshold)),
    ))
}

fn validate_factory(record: &RuleRecord) -> Result<Rule> {
    Ok(Rule::new(
        VALIDATE,
        record.version,
        2,
        [StatementKind::IssueExists, StatementKind::AssessmentMade],
        [StatementKind::ValidationStatus],
        serde_json::json!({}),
        Arc::new(ValidateRule),
    ))
}

fn prioritize_factory(record: &RuleRecord) -> Result<Rule> {
    let config = prioritize_config(&record.config)?;
    Ok(Rule::new(
        PRIORITIZE,
        record.version,
        3,
        [
            StatementKind::FindingObserved,
            StatementKind::IssueExists,
            StatementKind::ValidationStatus,
            StatementKind::AssessmentMade,
        ],
        [StatementKind::PriorityAssigned],
        to_value(&config),
        Arc::new(PrioritizeRule::new(config)),
    ))
}

/// Catalog with constructors for the built-in rules.
pub fn builtin_catalog() -> RuleCatalog {
    RuleCatalog::new()
        .with_factory(DEDUP, Arc::new(dedup_factory))
        .with_factory(VALIDATE, Arc::new(validate_factory))
        .with_factory(PRIORITIZE, Arc::new(prioritize_factory))
}

/// Registers the built-in rules with `config`, or replaces registered ones
/// whose stored configuration differs. Returns the ids that changed.
pub fn install_builtin(kb: &mut KnowledgeBase, config: &RulesConfig, at: Timestamp) -> Result<Vec<String>> {
    let mut changed = Vec::new();
    for rule_id in BUILTIN {
        let desired = kb.instantiate(rule_id, 1, config.for_rule(rule_id))?.record.config;
        match kb.state().rule(rule_id).map(|r| r.config.clone()) {
            None => {
                kb.register_from_catalog(rule_id, 1, desired, at)?;
                changed.push(rule_id.to_string());
            }
            Some(current) if current != desired => {
                kb.reconfigure_rule(rule_id, desired, at)?;
                changed.push(rule_id.to_string());
            }
            Some(_) => {}
        }
    }
    Ok(changed)
}

/// In-memory knowledge base with the built-in rules installed.
pub fn in_memory_kb(config: &RulesConfig) -> Result<KnowledgeBase> {
    let mut kb = KnowledgeBase::in_memory(builtin_catalog());
    install_builtin(&mut kb, config, 0)?;
    Ok(kb)
}
