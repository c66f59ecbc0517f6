//! The knowledge base: one writer over the event log, the materialized state,
//! the registered rules and the truth-maintenance machinery.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{check_stratification, Delta, EngineStatus, Rule, RuleCatalog, DEFAULT_MAX_PASSES};
use crate::error::{KbError, Result};
use crate::ingest::{self, RawReport};
use crate::model::{
    Assessment, AssessmentSubject, ReportIngested, SourceRef, Timestamp, Verdict,
};
use crate::statement::{BeliefId, Statement, StatementKind};
use crate::store::log::{EventSink, FileLog, NullSink};
use crate::store::{
    AssertPayload, Belief, EventBody, KbEvent, KbState, RetractPayload, RuleRemovedPayload,
    StatementPattern, SupportRecord,
};
use crate::tms::{
    self, Contradiction, Resolution, RetractedEntry, RevisionReport,
};
use crate::views::{self, IssueFilter, IssueView, JustificationTree};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct IngestResult {
    pub report_belief: BeliefId,
    pub findings: usize,
    pub skipped: usize,
    /// Events appended by this ingestion, fixpoint included. Zero on a repeat.
    pub new_events: u64,
    pub skipped_entries: Vec<ingest::SkippedEntry>,
}

/// Reference to what a human is assessing, as received from clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectRef {
    Issue(BeliefId),
    Finding(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentRequest {
    pub subject: SubjectRef,
    pub verdict: Verdict,
    #[serde(default)]
    pub rationale: String,
    pub author: String,
}

impl AssessmentRequest {
    /// Parses a JSON request. The verdict may also be given in the compact
    /// textual form, e.g. `"severity=high"` or `"not-duplicate=a,b"`.
    pub fn from_json(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
        if let Some(serde_json::Value::String(text)) = value.get("verdict") {
            if serde_json::from_value::<Verdict>(serde_json::Value::String(text.clone())).is_err() {
                let verdict = Verdict::parse_compact(text)?;
                value["verdict"] = serde_json::to_value(verdict).map_err(|e| e.to_string())?;
            }
        }
        serde_json::from_value(value).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentOutcome {
    pub assessment_belief: BeliefId,
    pub revision: RevisionReport,
}

pub struct KnowledgeBase {
    pub(crate) state: KbState,
    events: Vec<KbEvent>,
    sink: Box<dyn EventSink>,
    pub(crate) rules: BTreeMap<String, Rule>,
    catalog: RuleCatalog,
    pub(crate) max_passes: usize,
    pub(crate) status: EngineStatus,
}

impl std::fmt::Debug for KnowledgeBase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnowledgeBase")
            .field("seq", &self.state.seq())
            .field("rules", &self.rules.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl KnowledgeBase {
    pub fn in_memory(catalog: RuleCatalog) -> Self {
        KnowledgeBase {
            state: KbState::new(),
            events: Vec::new(),
            sink: Box::new(NullSink),
            rules: BTreeMap::new(),
            catalog,
            max_passes: DEFAULT_MAX_PASSES,
            status: EngineStatus::default(),
        }
    }

    /// Opens the event log in `dir`, replaying it into memory.
    pub fn open(dir: &Path, catalog: RuleCatalog) -> Result<Self> {
        let (log, events) = FileLog::open(dir)?;
        Self::from_events(events, catalog, Box::new(log))
    }

    /// Rebuilds a knowledge base from a complete log.
    pub fn replay(events: Vec<KbEvent>, catalog: RuleCatalog) -> Result<Self> {
        Self::from_events(events, catalog, Box::new(NullSink))
    }

    fn from_events(events: Vec<KbEvent>, catalog: RuleCatalog, sink: Box<dyn EventSink>) -> Result<Self> {
        let state = KbState::replay(&events)?;
        let mut rules = BTreeMap::new();
        for record in state.rules().values() {
            rules.insert(record.rule_id.clone(), catalog.instantiate(record)?);
        }
        let last = state.seq();
        Ok(KnowledgeBase {
            state,
            events,
            sink,
            rules,
            catalog,
            max_passes: DEFAULT_MAX_PASSES,
            status: EngineStatus {
                last_fixpoint_seq: last,
                ..EngineStatus::default()
            },
        })
    }

    /// Copies every event into a fresh store in `dir`.
    pub fn import_into(dir: &Path, events: &[KbEvent], catalog: RuleCatalog) -> Result<Self> {
        let mut kb = Self::open(dir, catalog)?;
        if kb.state.seq() != 0 {
            return Err(KbError::StorageFailure(format!(
                "{} already holds {} events",
                dir.display(),
                kb.state.seq()
            )));
        }
        for event in events {
            kb.state.check(event).map_err(|e| KbError::CorruptLog {
                seq: event.seq,
                reason: e.to_string(),
            })?;
            kb.sink.append(event)?;
            kb.state.commit(event);
            kb.events.push(event.clone());
            if let EventBody::RuleRegistered(r) = &event.body {
                kb.rules.insert(r.rule_id.clone(), kb.catalog.instantiate(r)?);
            }
            if let EventBody::RuleRemoved(r) = &event.body {
                kb.rules.remove(&r.rule_id);
            }
        }
        kb.sink.commit()?;
        kb.status.last_fixpoint_seq = kb.state.seq();
        Ok(kb)
    }

    pub fn set_max_passes(&mut self, max_passes: usize) {
        self.max_passes = max_passes;
    }

    pub fn state(&self) -> &KbState {
        &self.state
    }

    pub fn catalog(&self) -> &RuleCatalog {
        &self.catalog
    }

    pub fn events(&self) -> &[KbEvent] {
        &self.events
    }

    /// Events with `seq > since`, at most `limit` of them.
    pub fn events_since(&self, since: u64, limit: usize) -> &[KbEvent] {
        // seq n lives at index n - 1.
        let start = (since as usize).min(self.events.len());
        let end = start.saturating_add(limit).min(self.events.len());
        &self.events[start..end]
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.values()
    }

    pub fn status(&self) -> EngineStatus {
        let derived_active = self
            .state
            .active_set()
            .iter()
            .filter(|id| self.state.get(id).is_some_and(|b| !b.is_explicit()))
            .count() as u64;
        EngineStatus {
            derived_active,
            ..self.status
        }
    }

    // ---------------------------------------------------------------------
    // Event emission

    pub(crate) fn emit(&mut self, body: EventBody, at: Timestamp) -> Result<()> {
        let event = KbEvent {
            seq: self.state.seq() + 1,
            at,
            body,
        };
        self.state.check(&event)?;
        self.sink.append(&event)?;
        self.state.commit(&event);
        self.events.push(event);
        Ok(())
    }

    pub(crate) fn flush(&mut self) -> Result<()> {
        self.sink.commit()
    }

    /// Logs an explicit assertion unless the belief is already explicitly held.
    /// Returns the id and whether the Active set changed.
    pub(crate) fn put_explicit(
        &mut self,
        statement: Statement,
        source: SourceRef,
        at: Timestamp,
    ) -> Result<(BeliefId, bool)> {
        statement.validate()?;
        let id = statement.id();
        if let Some(b) = self.state.get(&id) {
            if b.is_active() && b.is_explicit() {
                return Ok((id, false));
            }
        }
        let was_active = self.state.is_active(&id);
        self.emit(
            EventBody::Assert(AssertPayload {
                belief: id.clone(),
                statement,
                support: SupportRecord::Explicit { source },
            }),
            at,
        )?;
        Ok((id, !was_active))
    }

    /// Logs a derived assertion unless that exact justification is already recorded.
    /// Returns the id and whether the Active set changed.
    pub(crate) fn put_derived(
        &mut self,
        statement: Statement,
        rule_id: &str,
        premises: BTreeSet<BeliefId>,
        at: Timestamp,
    ) -> Result<(BeliefId, bool)> {
        statement.validate()?;
        let version = self
            .state
            .rule(rule_id)
            .map(|r| r.version)
            .ok_or_else(|| KbError::UnknownRule(rule_id.to_string()))?;
        let id = statement.id();
        let jid = tms::Justification::new(rule_id.to_string(), version, premises.clone(), id.clone()).id;
        if let Some(b) = self.state.get(&id) {
            if b.is_active() && b.justification_ids().any(|j| *j == jid) {
                return Ok((id, false));
            }
        }
        let was_active = self.state.is_active(&id);
        self.emit(
            EventBody::Assert(AssertPayload {
                belief: id.clone(),
                statement,
                support: SupportRecord::Derived {
                    rule_id: rule_id.to_string(),
                    rule_version: version,
                    premises,
                },
            }),
            at,
        )?;
        Ok((id, !was_active))
    }

    /// Retracts `root` and everything that loses support with it. Retracting a
    /// report also retracts the findings it carried. The root is not listed.
    pub(crate) fn retract_cascading(
        &mut self,
        root: &BeliefId,
        reason: &str,
        at: Timestamp,
    ) -> Result<Vec<RetractedEntry>> {
        let belief = self
            .state
            .get(root)
            .ok_or_else(|| KbError::UnknownBelief(root.clone()))?;
        if !belief.is_active() {
            return Err(KbError::AlreadyRetracted(root.clone()));
        }
        let carried: Vec<BeliefId> = match &belief.statement {
            Statement::ReportIngested(r) => self
                .state
                .active(StatementKind::FindingObserved)
                .filter(|b| b.statement.as_finding().is_some_and(|f| f.report_ref == r.report_ref))
                .map(|b| b.id.clone())
                .collect(),
            _ => Vec::new(),
        };
        self.emit(
            EventBody::Retract(RetractPayload {
                belief: root.clone(),
                reason: reason.to_string(),
                cascade_root: None,
                depth: 0,
            }),
            at,
        )?;
        let mut entries: Vec<RetractedEntry> = carried
            .iter()
            .map(|id| RetractedEntry { id: id.clone(), depth: 1 })
            .collect();
        let offset = u32::from(!carried.is_empty());
        let mut roots: BTreeSet<BeliefId> = carried.into_iter().collect();
        for entry in &entries {
            self.emit(
                EventBody::Retract(RetractPayload {
                    belief: entry.id.clone(),
                    reason: format!("report {root} retracted"),
                    cascade_root: Some(root.clone()),
                    depth: entry.depth,
                }),
                at,
            )?;
        }
        roots.insert(root.clone());
        let mut rest = tms::plan_cascade(&self.state, &roots);
        for entry in &mut rest {
            entry.depth += offset;
            self.emit(
                EventBody::Retract(RetractPayload {
                    belief: entry.id.clone(),
                    reason: format!("lost support after retraction of {root}"),
                    cascade_root: Some(root.clone()),
                    depth: entry.depth,
                }),
                at,
            )?;
        }
        entries.extend(rest);
        Ok(entries)
    }

    // ---------------------------------------------------------------------
    // Belief store operations

    /// Asserts a statement from outside the KB. Idempotent on content.
    /// Does not run inference; see [`KnowledgeBase::run_to_fixpoint`].
    pub fn assert_explicit(&mut self, statement: Statement, source: SourceRef, at: Timestamp) -> Result<BeliefId> {
        let (id, _) = self.put_explicit(statement, source, at)?;
        self.flush()?;
        Ok(id)
    }

    /// Records a derived belief with one justification by a registered rule.
    pub fn assert_derived(
        &mut self,
        statement: Statement,
        rule_id: &str,
        premises: impl IntoIterator<Item = BeliefId>,
        at: Timestamp,
    ) -> Result<BeliefId> {
        let premises: BTreeSet<BeliefId> = premises.into_iter().collect();
        if premises.is_empty() {
            return Err(KbError::SchemaViolation("a justification needs at least one premise".into()));
        }
        let (id, _) = self.put_derived(statement, rule_id, premises, at)?;
        self.flush()?;
        Ok(id)
    }

    /// Retracts a belief, cascades to dependents, then re-derives to fixpoint.
    pub fn retract(&mut self, id: &BeliefId, reason: &str, at: Timestamp) -> Result<RevisionReport> {
        let mut entries = self.retract_cascading(id, reason, at)?;
        let mut seed = Delta::default();
        seed.record_retract(id.clone());
        for e in &entries {
            seed.record_retract(e.id.clone());
        }
        let run = self.fixpoint(seed, BTreeSet::new(), at)?;
        entries.extend(run.retracted);
        self.flush()?;
        Ok(RevisionReport {
            root: Some(id.clone()),
            retracted: entries,
            rederived: run.asserted,
            rederivation_scheduled: true,
        })
    }

    pub fn query(&self, pattern: &StatementPattern) -> Vec<&Belief> {
        self.state.query(pattern)
    }

    pub fn get(&self, id: &BeliefId) -> Option<&Belief> {
        self.state.get(id)
    }

    // ---------------------------------------------------------------------
    // Logical core operations

    pub fn detect_contradictions(&self, delta: &BTreeSet<BeliefId>, at: Timestamp) -> Vec<Contradiction> {
        tms::detect_contradictions(&self.state, delta, at)
    }

    /// Resolves one contradiction, retracting the losers with cascades, and
    /// re-derives to fixpoint.
    pub fn resolve(&mut self, contradiction: &Contradiction, at: Timestamp) -> Result<Resolution> {
        let (resolution, entries) = self.apply_resolution(contradiction, at)?;
        let mut seed = Delta::default();
        for id in resolution.retracted.iter().chain(entries.iter().map(|e| &e.id)) {
            seed.record_retract(id.clone());
        }
        self.fixpoint(seed, BTreeSet::new(), at)?;
        self.flush()?;
        Ok(resolution)
    }

    pub(crate) fn apply_resolution(
        &mut self,
        contradiction: &Contradiction,
        at: Timestamp,
    ) -> Result<(Resolution, Vec<RetractedEntry>)> {
        if let Some(gone) = contradiction.parties.iter().find(|p| !self.state.is_active(p)) {
            return Err(KbError::AlreadyRetracted(gone.clone()));
        }
        let resolution = tms::choose_resolution(&self.state, contradiction);
        let mut entries = Vec::new();
        for loser in &resolution.retracted {
            if !self.state.is_active(loser) {
                continue;
            }
            let reason = format!("contradiction resolved ({:?}) in favour of {}", resolution.rule, resolution.kept);
            entries.push(RetractedEntry { id: loser.clone(), depth: 1 });
            let cascade = self.retract_cascading(loser, &reason, at)?;
            entries.extend(cascade.into_iter().map(|mut e| {
                e.depth += 1;
                e
            }));
        }
        self.status.contradictions_resolved += 1;
        Ok((resolution, entries))
    }

    /// Cascades from a belief that was retracted without one, then re-derives.
    pub fn invalidate_cascade(&mut self, root: &BeliefId, at: Timestamp) -> Result<RevisionReport> {
        if self.state.is_active(root) || self.state.get(root).is_none() {
            return Err(KbError::SchemaViolation(format!("{root} is not a retracted belief")));
        }
        let plan = tms::plan_cascade(&self.state, &BTreeSet::from([root.clone()]));
        let mut seed = Delta::default();
        seed.record_retract(root.clone());
        for entry in &plan {
            self.emit(
                EventBody::Retract(RetractPayload {
                    belief: entry.id.clone(),
                    reason: format!("lost support after retraction of {root}"),
                    cascade_root: Some(root.clone()),
                    depth: entry.depth,
                }),
                at,
            )?;
            seed.record_retract(entry.id.clone());
        }
        let run = self.fixpoint(seed, BTreeSet::new(), at)?;
        self.flush()?;
        let mut retracted = plan;
        retracted.extend(run.retracted);
        Ok(RevisionReport {
            root: Some(root.clone()),
            retracted,
            rederived: run.asserted,
            rederivation_scheduled: true,
        })
    }

    pub fn well_founded_audit(&self) -> Vec<BeliefId> {
        tms::well_founded_audit(&self.state)
    }

    // ---------------------------------------------------------------------
    // Rules

    /// Registers a new rule and evaluates it over the existing beliefs.
    pub fn register_rule(&mut self, rule: Rule, at: Timestamp) -> Result<Delta> {
        if let Some(existing) = self.state.rule(rule.id()) {
            return Err(KbError::DuplicateRule {
                rule_id: rule.id().to_string(),
                version: existing.version,
            });
        }
        check_stratification(self.state.rules(), &rule.record, None)?;
        let rule_id = rule.id().to_string();
        self.emit(EventBody::RuleRegistered(rule.record.clone()), at)?;
        self.rules.insert(rule_id.clone(), rule);
        let run = self.fixpoint(Delta::default(), BTreeSet::from([rule_id]), at)?;
        self.flush()?;
        Ok(run.delta)
    }

    /// Instantiates a rule from the catalog and registers it.
    pub fn register_from_catalog(
        &mut self,
        rule_id: &str,
        version: u32,
        config: serde_json::Value,
        at: Timestamp,
    ) -> Result<Delta> {
        let rule = self.instantiate(rule_id, version, config)?;
        self.register_rule(rule, at)
    }

    pub fn instantiate(&self, rule_id: &str, version: u32, config: serde_json::Value) -> Result<Rule> {
        // The factory fills in strata and kinds; only id, version and config matter here.
        let probe = crate::store::RuleRecord {
            rule_id: rule_id.to_string(),
            version,
            stratum: 0,
            read_kinds: BTreeSet::new(),
            write_kinds: BTreeSet::new(),
            config,
        };
        self.catalog.instantiate(&probe)
    }

    /// Swaps a registered rule for a new version: beliefs resting only on the
    /// old version are retracted, then the new version runs over the whole KB.
    pub fn replace_rule(&mut self, rule: Rule, at: Timestamp) -> Result<RevisionReport> {
        let rule_id = rule.id().to_string();
        let old = self
            .state
            .rule(&rule_id)
            .cloned()
            .ok_or_else(|| KbError::UnknownRule(rule_id.clone()))?;
        if rule.record.version <= old.version {
            return Err(KbError::DuplicateRule {
                rule_id,
                version: rule.record.version,
            });
        }
        check_stratification(self.state.rules(), &rule.record, Some(&rule_id))?;

        let stale: Vec<BeliefId> = self
            .state
            .active_set()
            .into_iter()
            .filter(|id| {
                let b = self.state.get(id).expect("active belief exists");
                if b.is_explicit() {
                    return false;
                }
                let js = self.state.justifications_of(id);
                !js.is_empty()
                    && js
                        .iter()
                        .all(|j| j.rule_id == rule_id && j.rule_version == old.version)
            })
            .collect();

        let mut retracted = Vec::new();
        let mut seed = Delta::default();
        for id in stale {
            if !self.state.is_active(&id) {
                continue;
            }
            retracted.push(RetractedEntry { id: id.clone(), depth: 1 });
            seed.record_retract(id.clone());
            let reason = format!("rule {rule_id} v{} replaced", old.version);
            for mut e in self.retract_cascading(&id, &reason, at)? {
                seed.record_retract(e.id.clone());
                e.depth += 1;
                retracted.push(e);
            }
        }

        self.emit(
            EventBody::RuleRemoved(RuleRemovedPayload {
                rule_id: rule_id.clone(),
                version: old.version,
            }),
            at,
        )?;
        self.emit(EventBody::RuleRegistered(rule.record.clone()), at)?;
        self.rules.insert(rule_id.clone(), rule);

        let run = self.fixpoint(seed, BTreeSet::from([rule_id]), at)?;
        self.flush()?;
        retracted.extend(run.retracted);
        Ok(RevisionReport {
            root: None,
            retracted,
            rederived: run.asserted,
            rederivation_scheduled: true,
        })
    }

    /// Replaces `rule_id` with a catalog instance carrying `config`, bumping the version.
    pub fn reconfigure_rule(&mut self, rule_id: &str, config: serde_json::Value, at: Timestamp) -> Result<RevisionReport> {
        let current = self
            .state
            .rule(rule_id)
            .ok_or_else(|| KbError::UnknownRule(rule_id.to_string()))?
            .version;
        let rule = self.instantiate(rule_id, current + 1, config)?;
        self.replace_rule(rule, at)
    }

    /// Re-derives everything from the explicit beliefs alone, on a copy.
    /// The live KB is untouched; this is the reference for incremental results.
    pub fn full_recompute(&self) -> Result<KbState> {
        let mut scratch = KnowledgeBase::in_memory(self.catalog.clone());
        scratch.max_passes = self.max_passes;
        let mut records: Vec<&Rule> = self.rules.values().collect();
        records.sort_by(|a, b| (a.record.stratum, a.id()).cmp(&(b.record.stratum, b.id())));
        for rule in records {
            scratch.emit(EventBody::RuleRegistered(rule.record.clone()), 0)?;
            scratch.rules.insert(rule.id().to_string(), rule.clone());
        }
        let mut seed = Delta::default();
        for belief in self.state.beliefs().filter(|b| b.is_active() && b.is_explicit()) {
            for (source, at) in belief.explicit_sources() {
                let (id, _) = scratch.put_explicit(belief.statement.clone(), source.clone(), at)?;
                seed.record_assert(id);
            }
        }
        let all: BTreeSet<String> = scratch.rules.keys().cloned().collect();
        scratch.fixpoint(seed, all, 0)?;
        Ok(scratch.state)
    }

    // ---------------------------------------------------------------------
    // Ingestion and assessments

    /// Parses a report and asserts it with its findings, then runs inference.
    /// Nothing is asserted when the report as a whole cannot be parsed.
    pub fn ingest(&mut self, raw: &RawReport) -> Result<IngestResult> {
        let parsed = ingest::parse_report(raw)?;
        let before = self.state.seq();
        let report = Statement::ReportIngested(ReportIngested {
            report_ref: parsed.report_ref.clone(),
            tool_name: parsed.tool_name.clone(),
            format: parsed.format,
            findings: parsed.findings.len() as u32,
            skipped: parsed.skipped.len() as u32,
        });
        let source = SourceRef::tool_report(parsed.report_ref.to_string());
        let mut seed = Delta::default();
        let (report_id, changed) = self.put_explicit(report, source.clone(), raw.received_at)?;
        if changed {
            seed.record_assert(report_id.clone());
        }
        for finding in &parsed.findings {
            let (id, changed) =
                self.put_explicit(Statement::FindingObserved(finding.clone()), source.clone(), raw.received_at)?;
            if changed {
                seed.record_assert(id);
            }
        }
        self.fixpoint(seed, BTreeSet::new(), raw.received_at)?;
        self.flush()?;
        tracing::debug!(
            report = %parsed.report_ref,
            findings = parsed.findings.len(),
            skipped = parsed.skipped.len(),
            events = self.state.seq() - before,
            "report ingested"
        );
        Ok(IngestResult {
            report_belief: report_id,
            findings: parsed.findings.len(),
            skipped: parsed.skipped.len(),
            new_events: self.state.seq() - before,
            skipped_entries: parsed.skipped,
        })
    }

    /// Resolves a client subject reference into an assessment subject.
    pub fn resolve_subject(&self, subject: &SubjectRef) -> Result<AssessmentSubject> {
        match subject {
            SubjectRef::Issue(key) => match self.state.get(key) {
                Some(b) if b.is_active() => match &b.statement {
                    Statement::IssueExists(issue) => Ok(AssessmentSubject::Issue {
                        issue_key: key.clone(),
                        findings: issue.members.clone(),
                    }),
                    _ => Err(KbError::UnknownSubject(format!("{key} is not an issue"))),
                },
                _ => Err(KbError::UnknownSubject(format!("no active issue {key}"))),
            },
            SubjectRef::Finding(key) => {
                if self.state.observations_of(key).is_empty() {
                    Err(KbError::UnknownSubject(format!("no active finding {key}")))
                } else {
                    Ok(AssessmentSubject::Finding {
                        finding_key: key.clone(),
                    })
                }
            }
        }
    }

    /// Records a human assessment and revises belief accordingly.
    pub fn submit_assessment(&mut self, request: &AssessmentRequest, at: Timestamp) -> Result<AssessmentOutcome> {
        let subject = self.resolve_subject(&request.subject)?;
        if let Verdict::NotDuplicate { a, b } = &request.verdict {
            if a == b {
                return Err(KbError::InvalidAssessment("not_duplicate needs two distinct findings".into()));
            }
            for key in [a, b] {
                if self.state.observations_of(key).is_empty() {
                    return Err(KbError::UnknownSubject(format!("no active finding {key}")));
                }
            }
        }
        if request.author.trim().is_empty() {
            return Err(KbError::InvalidAssessment("author is required".into()));
        }
        let verdict = match &request.verdict {
            Verdict::NotDuplicate { a, b } => {
                let pair = crate::model::FindingPair::new(a.clone(), b.clone());
                Verdict::NotDuplicate { a: pair.a, b: pair.b }
            }
            v => v.clone(),
        };
        let author = SourceRef::human(request.author.trim());
        let statement = Statement::AssessmentMade(Assessment {
            subject,
            verdict,
            author: author.clone(),
            rationale: request.rationale.clone(),
            at,
        });
        let (id, changed) = self.put_explicit(statement, author, at)?;
        let mut seed = Delta::default();
        if changed {
            seed.record_assert(id.clone());
        }
        let run = self.fixpoint(seed, BTreeSet::new(), at)?;
        self.flush()?;
        Ok(AssessmentOutcome {
            assessment_belief: id.clone(),
            revision: RevisionReport {
                root: Some(id),
                retracted: run.retracted,
                rederived: run.asserted,
                rederivation_scheduled: true,
            },
        })
    }

    // ---------------------------------------------------------------------
    // Views

    pub fn issues(&self, filter: &IssueFilter) -> Vec<IssueView> {
        views::issue_views(&self.state, filter)
    }

    pub fn explain(&self, id: &BeliefId) -> Result<JustificationTree> {
        views::justification_tree(&self.state, id).ok_or_else(|| KbError::UnknownBelief(id.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Severity;
    use crate::rules::{in_memory_kb, RulesConfig};

    #[test]
    fn assessment_request_accepts_compact_verdicts() {
        let r = AssessmentRequest::from_json(
            br#"{"subject":{"finding":"k"},"verdict":"severity=critical","author":"a"}"#,
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::SeverityOverride { level: Severity::Critical });
        assert_eq!(r.rationale, "");
        let r = AssessmentRequest::from_json(
            br#"{"subject":{"finding":"k"},"verdict":{"not_duplicate":{"a":"y","b":"x"}},"author":"a"}"#,
        )
        .unwrap();
        assert!(matches!(r.verdict, Verdict::NotDuplicate { .. }));
        assert!(AssessmentRequest::from_json(br#"{"subject":{"finding":"k"},"verdict":"perhaps","author":"a"}"#).is_err());
    }

    #[test]
    fn events_since_is_exclusive_and_bounded() {
        let kb = in_memory_kb(&RulesConfig::default()).unwrap();
        let head = kb.state().seq();
        assert!(head >= 3);
        assert_eq!(kb.events_since(0, usize::MAX).len() as u64, head);
        let page = kb.events_since(1, 2);
        assert_eq!(page.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![2, 3]);
        assert!(kb.events_since(head + 5, 10).is_empty());
    }

    #[test]
    fn full_recompute_of_an_empty_kb_is_empty() {
        let kb = in_memory_kb(&RulesConfig::default()).unwrap();
        assert!(kb.full_recompute().unwrap().active_set().is_empty());
        assert_eq!(kb.rules().count(), 3);
    }
}
