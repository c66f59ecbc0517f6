//! Stratified, incremental rule evaluation.
//!
//! Rules declare the statement kinds they read and write plus a stratum. A rule
//! may only read explicit input kinds or kinds written by strictly lower strata,
//! so a sweep over strata in ascending order sees every input it depends on.
//! Each rule receives only the changes it has not yet seen (its delta) together
//! with a read-only snapshot for joins.

mod fixpoint;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{KbError, Result};
use crate::statement::{BeliefId, Statement, StatementKind};
use crate::store::{KbState, RuleRecord};

pub const DEFAULT_MAX_PASSES: usize = 10_000;

/// Changes to the Active belief set over some span of the event log.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delta {
    pub asserted: BTreeSet<BeliefId>,
    pub retracted: BTreeSet<BeliefId>,
    /// Inclusive event seq range covered, `(0, 0)` when nothing was logged.
    pub origin_seq: (u64, u64),
}

impl Delta {
    pub fn is_empty(&self) -> bool {
        self.asserted.is_empty() && self.retracted.is_empty()
    }

    pub fn asserted(ids: impl IntoIterator<Item = BeliefId>) -> Self {
        Delta {
            asserted: ids.into_iter().collect(),
            ..Delta::default()
        }
    }

    pub fn record_assert(&mut self, id: BeliefId) {
        self.retracted.remove(&id);
        self.asserted.insert(id);
    }

    pub fn record_retract(&mut self, id: BeliefId) {
        self.asserted.remove(&id);
        self.retracted.insert(id);
    }

    pub fn ids(&self) -> impl Iterator<Item = &BeliefId> {
        self.asserted.iter().chain(self.retracted.iter())
    }

    /// Changed beliefs of `kind`, looked up in `state`.
    pub fn of_kind<'s>(
        &'s self,
        state: &'s KbState,
        kind: StatementKind,
    ) -> impl Iterator<Item = (&'s BeliefId, &'s Statement)> + 's {
        self.ids().filter_map(move |id| {
            state
                .get(id)
                .filter(|b| b.kind() == kind)
                .map(|b| (id, &b.statement))
        })
    }
}

/// Input handed to a rule body.
pub struct RuleInput<'a> {
    pub state: &'a KbState,
    pub delta: &'a Delta,
    /// Set when the rule must re-evaluate over the whole KB (new or replaced rule).
    pub full: bool,
    pub version: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    pub statement: Statement,
    pub premises: BTreeSet<BeliefId>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleOutput {
    pub derived: Vec<Derivation>,
    /// Earlier conclusions of this rule it no longer supports.
    pub withdrawn: Vec<BeliefId>,
}

impl RuleOutput {
    pub fn derive(&mut self, statement: Statement, premises: impl IntoIterator<Item = BeliefId>) {
        self.derived.push(Derivation {
            statement,
            premises: premises.into_iter().collect(),
        });
    }
}

/// A rule's logic. Must be pure: same snapshot and delta, same output.
pub trait RuleBody: Send + Sync {
    fn evaluate(&self, input: &RuleInput<'_>) -> RuleOutput;
}

impl<F> RuleBody for F
where
    F: Fn(&RuleInput<'_>) -> RuleOutput + Send + Sync,
{
    fn evaluate(&self, input: &RuleInput<'_>) -> RuleOutput {
        self(input)
    }
}

#[derive(Clone)]
pub struct Rule {
    pub record: RuleRecord,
    pub body: Arc<dyn RuleBody>,
}

impl fmt::Debug for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Rule").field("record", &self.record).finish_non_exhaustive()
    }
}

impl Rule {
    pub fn new(
        rule_id: impl Into<String>,
        version: u32,
        stratum: u32,
        read_kinds: impl IntoIterator<Item = StatementKind>,
        write_kinds: impl IntoIterator<Item = StatementKind>,
        config: serde_json::Value,
        body: Arc<dyn RuleBody>,
    ) -> Self {
        Rule {
            record: RuleRecord {
                rule_id: rule_id.into(),
                version,
                stratum,
                read_kinds: read_kinds.into_iter().collect(),
                write_kinds: write_kinds.into_iter().collect(),
                config,
            },
            body,
        }
    }

    pub fn id(&self) -> &str {
        &self.record.rule_id
    }

    /// Whether a change to a belief of `kind` should wake this rule.
    /// Retractions of the rule's own conclusions count, so it can re-derive them.
    fn wakes_on(&self, kind: StatementKind, retracted: bool) -> bool {
        self.record.read_kinds.contains(&kind) || (retracted && self.record.write_kinds.contains(&kind))
    }
}

pub type RuleFactory = Arc<dyn Fn(&RuleRecord) -> Result<Rule> + Send + Sync>;

/// Maps rule ids to constructors so registration events can be replayed.
#[derive(Clone, Default)]
pub struct RuleCatalog {
    factories: BTreeMap<String, RuleFactory>,
}

impl fmt::Debug for RuleCatalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

impl RuleCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_factory(mut self, rule_id: impl Into<String>, factory: RuleFactory) -> Self {
        self.factories.insert(rule_id.into(), factory);
        self
    }

    pub fn insert(&mut self, rule_id: impl Into<String>, factory: RuleFactory) {
        self.factories.insert(rule_id.into(), factory);
    }

    pub fn instantiate(&self, record: &RuleRecord) -> Result<Rule> {
        let factory = self
            .factories
            .get(&record.rule_id)
            .ok_or_else(|| KbError::UnknownRule(record.rule_id.clone()))?;
        factory(record)
    }
}

/// Checks a candidate rule against the registered set. `replacing` names a rule
/// id whose registered version is about to be swapped out and is ignored.
pub fn check_stratification(
    registered: &BTreeMap<String, RuleRecord>,
    candidate: &RuleRecord,
    replacing: Option<&str>,
) -> Result<()> {
    let violation = |conflicting: &str, reason: String| KbError::StratificationViolation {
        rule: candidate.rule_id.clone(),
        conflicting: conflicting.to_string(),
        reason,
    };

    if let Some(k) = candidate.write_kinds.iter().find(|k| k.is_explicit_input()) {
        return Err(violation(&candidate.rule_id, format!("{k} is an explicit input kind")));
    }
    if let Some(k) = candidate.read_kinds.intersection(&candidate.write_kinds).next() {
        return Err(violation(&candidate.rule_id, format!("reads its own output {k}")));
    }

    for other in registered.values() {
        if Some(other.rule_id.as_str()) == replacing || other.rule_id == candidate.rule_id {
            continue;
        }
        if let Some(k) = other.write_kinds.intersection(&candidate.write_kinds).next() {
            return Err(violation(&other.rule_id, format!("both rules write {k}")));
        }
        if let Some(k) = candidate.read_kinds.intersection(&other.write_kinds).next() {
            if other.stratum >= candidate.stratum {
                return Err(violation(
                    &other.rule_id,
                    format!(
                        "reads {k}, written at stratum {} which is not below {}",
                        other.stratum, candidate.stratum
                    ),
                ));
            }
        }
        if let Some(k) = other.read_kinds.intersection(&candidate.write_kinds).next() {
            if other.stratum <= candidate.stratum {
                return Err(violation(
                    &other.rule_id,
                    format!(
                        "writes {k}, read at stratum {} which is not above {}",
                        other.stratum, candidate.stratum
                    ),
                ));
            }
        }
    }
    Ok(())
}

/// Engine status as reported by the health endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineStatus {
    pub last_fixpoint_seq: u64,
    pub passes: u64,
    pub derived_active: u64,
    pub contradictions_resolved: u64,
}
