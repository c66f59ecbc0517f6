//! Event-sourced belief storage with a materialized, queryable current state.
//!
//! Every mutation is an event in an append-only log. [`KbState`] is the fold of
//! that log: replaying the same events from empty always yields an equal state,
//! which is what makes the log a complete audit trail of belief revision.

pub mod event;
pub mod log;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{KbError, Result};
use crate::model::{SourceRef, Timestamp};
use crate::statement::{BeliefId, Statement, StatementKind, Topic};
use crate::tms::{Justification, JustificationId};

pub use event::{
    AssertPayload, EventBody, KbEvent, RetractPayload, RuleRecord, RuleRemovedPayload,
    SupportRecord,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "snake_case")]
pub enum Origin {
    Explicit { source: SourceRef },
    Derived { justification: JustificationId },
}

/// How a belief first came to be held in its current revision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(flatten)]
    pub origin: Origin,
    pub asserted_at: Timestamp,
}

/// One reason for holding a belief. A belief may have several.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "support", rename_all = "snake_case")]
pub enum Support {
    Explicit { source: SourceRef, at: Timestamp },
    Justified { justification: JustificationId, at: Timestamp },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum BeliefStatus {
    Active,
    Retracted { reason: String, at: Timestamp },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub id: BeliefId,
    pub statement: Statement,
    pub provenance: Provenance,
    pub status: BeliefStatus,
    /// Incremented each time a retracted statement is asserted again.
    pub revision: u32,
    /// Supports of the current revision. Kept after retraction for explanation.
    pub supports: Vec<Support>,
}

impl Belief {
    pub fn is_active(&self) -> bool {
        matches!(self.status, BeliefStatus::Active)
    }

    pub fn kind(&self) -> StatementKind {
        self.statement.kind()
    }

    pub fn explicit_sources(&self) -> impl Iterator<Item = (&SourceRef, Timestamp)> {
        self.supports.iter().filter_map(|s| match s {
            Support::Explicit { source, at } => Some((source, *at)),
            Support::Justified { .. } => None,
        })
    }

    pub fn is_explicit(&self) -> bool {
        self.explicit_sources().next().is_some()
    }

    pub fn justification_ids(&self) -> impl Iterator<Item = &JustificationId> {
        self.supports.iter().filter_map(|s| match s {
            Support::Justified { justification, .. } => Some(justification),
            Support::Explicit { .. } => None,
        })
    }
}

/// Field predicate inside a [`StatementPattern`]. Fields use dotted payload paths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum FieldPredicate {
    Equals { field: String, value: String },
    Prefix { field: String, value: String },
}

impl FieldPredicate {
    fn matches(&self, statement: &Statement) -> bool {
        match self {
            FieldPredicate::Equals { field, value } => {
                statement.field(field).as_deref() == Some(value.as_str())
            }
            FieldPredicate::Prefix { field, value } => statement
                .field(field)
                .is_some_and(|v| v.starts_with(value.as_str())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementPattern {
    #[serde(default)]
    pub kind: Option<StatementKind>,
    #[serde(default)]
    pub predicates: Vec<FieldPredicate>,
}

impl StatementPattern {
    pub fn kind(kind: StatementKind) -> Self {
        StatementPattern {
            kind: Some(kind),
            predicates: Vec::new(),
        }
    }

    pub fn with(mut self, predicate: FieldPredicate) -> Self {
        self.predicates.push(predicate);
        self
    }

    pub fn matches(&self, belief: &Belief) -> bool {
        self.kind.is_none_or(|k| k == belief.kind())
            && self.predicates.iter().all(|p| p.matches(&belief.statement))
    }
}

/// Materialized state: the fold of the event log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KbState {
    seq: u64,
    beliefs: BTreeMap<BeliefId, Belief>,
    justifications: BTreeMap<JustificationId, Justification>,
    rules: BTreeMap<String, RuleRecord>,

    // Indexes, rebuilt incrementally by `commit`.
    active_by_kind: BTreeMap<StatementKind, BTreeSet<BeliefId>>,
    dependents: BTreeMap<BeliefId, BTreeSet<JustificationId>>,
    topics: BTreeMap<Topic, BTreeSet<BeliefId>>,
    observations: BTreeMap<String, BTreeSet<BeliefId>>,
}

static EMPTY_IDS: BTreeSet<BeliefId> = BTreeSet::new();

impl KbState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds state from a complete log.
    pub fn replay(events: &[KbEvent]) -> Result<KbState> {
        let mut state = KbState::new();
        for event in events {
            state.apply(event).map_err(|e| match e {
                corrupt @ KbError::CorruptLog { .. } => corrupt,
                other => KbError::CorruptLog {
                    seq: event.seq,
                    reason: other.to_string(),
                },
            })?;
        }
        Ok(state)
    }

    /// Sequence number of the last applied event.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn get(&self, id: &BeliefId) -> Option<&Belief> {
        self.beliefs.get(id)
    }

    pub fn is_active(&self, id: &BeliefId) -> bool {
        self.beliefs.get(id).is_some_and(Belief::is_active)
    }

    pub fn beliefs(&self) -> impl Iterator<Item = &Belief> {
        self.beliefs.values()
    }

    pub fn active_ids(&self, kind: StatementKind) -> &BTreeSet<BeliefId> {
        self.active_by_kind.get(&kind).unwrap_or(&EMPTY_IDS)
    }

    pub fn active(&self, kind: StatementKind) -> impl Iterator<Item = &Belief> {
        self.active_ids(kind).iter().map(|id| &self.beliefs[id])
    }

    pub fn active_count(&self) -> usize {
        self.active_by_kind.values().map(BTreeSet::len).sum()
    }

    /// Ids of every Active belief.
    pub fn active_set(&self) -> BTreeSet<BeliefId> {
        self.active_by_kind.values().flatten().cloned().collect()
    }

    /// Active `FindingObserved` beliefs grouped by finding key.
    pub fn observations(&self) -> &BTreeMap<String, BTreeSet<BeliefId>> {
        &self.observations
    }

    pub fn observations_of(&self, finding_key: &str) -> &BTreeSet<BeliefId> {
        self.observations.get(finding_key).unwrap_or(&EMPTY_IDS)
    }

    /// Active beliefs sharing a conflict topic.
    pub fn topic_members(&self, topic: &Topic) -> &BTreeSet<BeliefId> {
        self.topics.get(topic).unwrap_or(&EMPTY_IDS)
    }

    pub fn justification(&self, id: &JustificationId) -> Option<&Justification> {
        self.justifications.get(id)
    }

    pub fn justifications(&self) -> impl Iterator<Item = &Justification> {
        self.justifications.values()
    }

    /// Justifications of the belief's current revision.
    pub fn justifications_of(&self, id: &BeliefId) -> Vec<&Justification> {
        self.beliefs
            .get(id)
            .map(|b| {
                b.justification_ids()
                    .filter_map(|j| self.justifications.get(j))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn justification_is_live(&self, j: &Justification) -> bool {
        j.premises.iter().all(|p| self.is_active(p))
    }

    /// Conclusions whose current revision cites `premise` in some justification.
    pub fn dependents_of(&self, premise: &BeliefId) -> BTreeSet<BeliefId> {
        let Some(jids) = self.dependents.get(premise) else {
            return BTreeSet::new();
        };
        jids.iter()
            .filter_map(|jid| self.justifications.get(jid))
            .filter(|j| {
                self.beliefs
                    .get(&j.conclusion)
                    .is_some_and(|b| b.justification_ids().any(|x| *x == j.id))
            })
            .map(|j| j.conclusion.clone())
            .collect()
    }

    pub fn rules(&self) -> &BTreeMap<String, RuleRecord> {
        &self.rules
    }

    pub fn rule(&self, rule_id: &str) -> Option<&RuleRecord> {
        self.rules.get(rule_id)
    }

    /// Active beliefs matching `pattern`, ordered by (kind, id).
    pub fn query(&self, pattern: &StatementPattern) -> Vec<&Belief> {
        let kinds: Vec<StatementKind> = match pattern.kind {
            Some(k) => vec![k],
            None => StatementKind::ALL.to_vec(),
        };
        kinds
            .into_iter()
            .flat_map(|k| self.active(k))
            .filter(|b| pattern.matches(b))
            .collect()
    }

    /// True when `conclusion` is reachable from `premises` through live support edges.
    pub fn would_cycle(&self, premises: &BTreeSet<BeliefId>, conclusion: &BeliefId) -> bool {
        if premises.contains(conclusion) {
            return true;
        }
        // Nothing can depend on a belief that nobody cites.
        if !self.dependents.contains_key(conclusion) {
            return false;
        }
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&BeliefId> = premises.iter().collect();
        while let Some(id) = stack.pop() {
            if id == conclusion {
                return true;
            }
            if !seen.insert(id) {
                continue;
            }
            if let Some(b) = self.beliefs.get(id) {
                for jid in b.justification_ids() {
                    if let Some(j) = self.justifications.get(jid) {
                        stack.extend(j.premises.iter());
                    }
                }
            }
        }
        false
    }

    /// Validates an event against the current state without changing it.
    pub fn check(&self, event: &KbEvent) -> Result<()> {
        if event.seq != self.seq + 1 {
            return Err(KbError::CorruptLog {
                seq: self.seq + 1,
                reason: format!("expected seq {}, found {}", self.seq + 1, event.seq),
            });
        }
        match &event.body {
            EventBody::Assert(p) => {
                p.statement.validate()?;
                let id = p.statement.id();
                if id != p.belief {
                    return Err(KbError::CorruptLog {
                        seq: event.seq,
                        reason: format!("belief id {} does not match content hash {id}", p.belief),
                    });
                }
                if let SupportRecord::Derived {
                    rule_id,
                    rule_version,
                    premises,
                } = &p.support
                {
                    match self.rules.get(rule_id) {
                        Some(r) if r.version == *rule_version => {}
                        _ => return Err(KbError::UnknownRule(format!("{rule_id}@{rule_version}"))),
                    }
                    if premises.is_empty() {
                        return Err(KbError::SchemaViolation(
                            "a justification needs at least one premise".into(),
                        ));
                    }
                    if let Some(missing) = premises.iter().find(|p| !self.is_active(p)) {
                        return Err(KbError::DanglingPremise(missing.clone()));
                    }
                    if self.would_cycle(premises, &id) {
                        return Err(KbError::CycleDetected(id));
                    }
                }
            }
            EventBody::Retract(p) => match self.beliefs.get(&p.belief) {
                None => return Err(KbError::UnknownBelief(p.belief.clone())),
                Some(b) if !b.is_active() => {
                    return Err(KbError::AlreadyRetracted(p.belief.clone()))
                }
                Some(_) => {}
            },
            EventBody::RuleRegistered(r) => {
                if let Some(existing) = self.rules.get(&r.rule_id) {
                    return Err(KbError::DuplicateRule {
                        rule_id: r.rule_id.clone(),
                        version: existing.version,
                    });
                }
            }
            EventBody::RuleRemoved(r) => match self.rules.get(&r.rule_id) {
                Some(existing) if existing.version == r.version => {}
                _ => return Err(KbError::UnknownRule(format!("{}@{}", r.rule_id, r.version))),
            },
        }
        Ok(())
    }

    /// Checks and applies one event.
    pub fn apply(&mut self, event: &KbEvent) -> Result<()> {
        self.check(event)?;
        self.commit(event);
        Ok(())
    }

    /// Applies an event already validated by [`KbState::check`].
    pub(crate) fn commit(&mut self, event: &KbEvent) {
        self.seq = event.seq;
        match &event.body {
            EventBody::Assert(p) => {
                let support = match &p.support {
                    SupportRecord::Explicit { source } => Support::Explicit {
                        source: source.clone(),
                        at: event.at,
                    },
                    SupportRecord::Derived {
                        rule_id,
                        rule_version,
                        premises,
                    } => {
                        let j = Justification::new(
                            rule_id.clone(),
                            *rule_version,
                            premises.clone(),
                            p.belief.clone(),
                        );
                        for premise in &j.premises {
                            self.dependents
                                .entry(premise.clone())
                                .or_default()
                                .insert(j.id.clone());
                        }
                        let jid = j.id.clone();
                        self.justifications.entry(jid.clone()).or_insert(j);
                        Support::Justified {
                            justification: jid,
                            at: event.at,
                        }
                    }
                };
                self.assert_support(&p.belief, &p.statement, support, event.at);
            }
            EventBody::Retract(p) => {
                let at = event.at;
                if let Some(b) = self.beliefs.get_mut(&p.belief) {
                    b.status = BeliefStatus::Retracted {
                        reason: p.reason.clone(),
                        at,
                    };
                    let (kind, statement) = (b.kind(), b.statement.clone());
                    self.unindex(&p.belief, kind, &statement);
                }
            }
            EventBody::RuleRegistered(r) => {
                self.rules.insert(r.rule_id.clone(), r.clone());
            }
            EventBody::RuleRemoved(r) => {
                self.rules.remove(&r.rule_id);
            }
        }
    }

    fn assert_support(&mut self, id: &BeliefId, statement: &Statement, support: Support, at: Timestamp) {
        let origin = match &support {
            Support::Explicit { source, .. } => Origin::Explicit {
                source: source.clone(),
            },
            Support::Justified { justification, .. } => Origin::Derived {
                justification: justification.clone(),
            },
        };
        let provenance = Provenance {
            origin,
            asserted_at: at,
        };
        let newly_active = match self.beliefs.get_mut(id) {
            Some(b) if b.is_active() => {
                if !b.supports.contains(&support) {
                    b.supports.push(support);
                }
                false
            }
            Some(b) => {
                b.revision += 1;
                b.status = BeliefStatus::Active;
                b.provenance = provenance;
                b.supports = vec![support];
                true
            }
            None => {
                self.beliefs.insert(
                    id.clone(),
                    Belief {
                        id: id.clone(),
                        statement: statement.clone(),
                        provenance,
                        status: BeliefStatus::Active,
                        revision: 1,
                        supports: vec![support],
                    },
                );
                true
            }
        };
        if newly_active {
            self.index(id, statement);
        }
    }

    fn index(&mut self, id: &BeliefId, statement: &Statement) {
        self.active_by_kind
            .entry(statement.kind())
            .or_default()
            .insert(id.clone());
        if let Some(topic) = statement.topic() {
            self.topics.entry(topic).or_default().insert(id.clone());
        }
        if let Statement::FindingObserved(f) = statement {
            self.observations
                .entry(f.finding_key.clone())
                .or_default()
                .insert(id.clone());
        }
    }

    fn unindex(&mut self, id: &BeliefId, kind: StatementKind, statement: &Statement) {
        remove_from(&mut self.active_by_kind, &kind, id);
        if let Some(topic) = statement.topic() {
            remove_from(&mut self.topics, &topic, id);
        }
        if let Statement::FindingObserved(f) = statement {
            remove_from(&mut self.observations, &f.finding_key, id);
        }
    }

    /// Marks a belief retracted without logging or cascading. Test-only corruption hook.
    #[doc(hidden)]
    pub fn corrupt_retract_without_cascade(&mut self, id: &BeliefId) {
        if let Some(b) = self.beliefs.get_mut(id) {
            b.status = BeliefStatus::Retracted {
                reason: "corrupted".into(),
                at: 0,
            };
            let (kind, statement) = (b.kind(), b.statement.clone());
            self.unindex(id, kind, &statement);
        }
    }
}

fn remove_from<K: Ord>(map: &mut BTreeMap<K, BTreeSet<BeliefId>>, key: &K, id: &BeliefId) {
    if let Some(set) = map.get_mut(key) {
        set.remove(id);
        if set.is_empty() {
            map.remove(key);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn report(run: &str) -> Statement {
        Statement::ReportIngested(ReportIngested {
            report_ref: ReportRef {
                pipeline_run_id: run.into(),
                report_hash: "abc".into(),
            },
            tool_name: "t".into(),
            format: ReportFormat::GenericJson,
            findings: 0,
            skipped: 0,
        })
    }

    fn assert_event(seq: u64, statement: Statement) -> KbEvent {
        KbEvent {
            seq,
            at: seq as i64 * 10,
            body: EventBody::Assert(AssertPayload {
                belief: statement.id(),
                statement,
                support: SupportRecord::Explicit {
                    source: SourceRef::tool_report("r"),
                },
            }),
        }
    }

    #[test]
    fn replay_of_empty_log_is_empty_state() {
        assert_eq!(KbState::replay(&[]).unwrap(), KbState::new());
    }

    #[test]
    fn gap_in_log_is_reported_with_its_seq() {
        let events = vec![assert_event(1, report("a")), assert_event(3, report("b"))];
        match KbState::replay(&events) {
            Err(KbError::CorruptLog { seq, .. }) => assert_eq!(seq, 2),
            other => panic!("expected CorruptLog, got {other:?}"),
        }
    }

    #[test]
    fn tampered_belief_id_is_rejected() {
        let mut e = assert_event(1, report("a"));
        if let EventBody::Assert(p) = &mut e.body {
            p.belief = report("b").id();
        }
        assert!(matches!(
            KbState::replay(&[e]),
            Err(KbError::CorruptLog { seq: 1, .. })
        ));
    }

    #[test]
    fn event_json_shape() {
        let e = assert_event(1, report("a"));
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(keys, BTreeSet::from(["seq", "at", "kind", "payload"]));
        assert_eq!(v["kind"], "Assert");
        let back: KbEvent = serde_json::from_value(v).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn query_orders_by_kind_then_id_and_filters_prefix() {
        let mut s = KbState::new();
        for (i, run) in ["b", "a", "c"].iter().enumerate() {
            s.apply(&assert_event(i as u64 + 1, report(run))).unwrap();
        }
        let all = s.query(&StatementPattern::kind(StatementKind::ReportIngested));
        let ids: Vec<_> = all.iter().map(|b| b.id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);

        let only_a = s.query(
            &StatementPattern::kind(StatementKind::ReportIngested).with(FieldPredicate::Prefix {
                field: "report_ref.pipeline_run_id".into(),
                value: "a".into(),
            }),
        );
        assert_eq!(only_a.len(), 1);
        assert!(s.query(&StatementPattern::kind(StatementKind::FindingObserved)).is_empty());
    }
}
