use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{SourceRef, Timestamp};
use crate::statement::{BeliefId, Statement, StatementKind};

/// One line of the event log: `{"seq", "at", "kind", "payload"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbEvent {
    pub seq: u64,
    pub at: Timestamp,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
#[allow(clippy::large_enum_variant)]
pub enum EventBody {
    Assert(AssertPayload),
    Retract(RetractPayload),
    RuleRegistered(RuleRecord),
    RuleRemoved(RuleRemovedPayload),
}

impl EventBody {
    pub fn kind_name(&self) -> &'static str {
        match self {
            EventBody::Assert(_) => "Assert",
            EventBody::Retract(_) => "Retract",
            EventBody::RuleRegistered(_) => "RuleRegistered",
            EventBody::RuleRemoved(_) => "RuleRemoved",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertPayload {
    pub belief: BeliefId,
    pub statement: Statement,
    pub support: SupportRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "snake_case")]
pub enum SupportRecord {
    Explicit {
        source: SourceRef,
    },
    Derived {
        rule_id: String,
        rule_version: u32,
        premises: BTreeSet<BeliefId>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetractPayload {
    pub belief: BeliefId,
    pub reason: String,
    /// Root of the cascade this retraction belongs to; `None` for the root itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cascade_root: Option<BeliefId>,
    #[serde(default)]
    pub depth: u32,
}

/// Activation record of a rule. Rule bodies live in the binary; the log only
/// carries what is needed to re-instantiate them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub rule_id: String,
    pub version: u32,
    pub stratum: u32,
    pub read_kinds: BTreeSet<StatementKind>,
    pub write_kinds: BTreeSet<StatementKind>,
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleRemovedPayload {
    pub rule_id: String,
    pub version: u32,
}
