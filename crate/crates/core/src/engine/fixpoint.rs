use std::collections::{BTreeMap, BTreeSet};

use crate::engine::{Delta, Rule, RuleInput};
use crate::error::{KbError, Result};
use crate::kb::KnowledgeBase;
use crate::model::Timestamp;
use crate::statement::BeliefId;
use crate::tms::{self, RetractedEntry};

/// One change to the Active set, in the order it happened.
#[derive(Debug, Clone)]
struct Change {
    id: BeliefId,
    retracted: bool,
    seq: u64,
}

/// Outcome of one fixpoint computation.
#[derive(Debug, Default)]
pub(crate) struct FixpointRun {
    /// Net change to the Active set, seed included.
    pub delta: Delta,
    /// Retractions made by the fixpoint itself (withdrawals and resolutions).
    pub retracted: Vec<RetractedEntry>,
    /// Beliefs that became Active during the fixpoint, seed excluded.
    pub asserted: Vec<BeliefId>,
}

struct Journal {
    changes: Vec<Change>,
}

impl Journal {
    fn push(&mut self, id: BeliefId, retracted: bool, seq: u64) {
        self.changes.push(Change { id, retracted, seq });
    }

    fn len(&self) -> usize {
        self.changes.len()
    }
}

impl KnowledgeBase {
    /// Evaluates every registered rule over the whole KB until nothing changes.
    pub fn run_to_fixpoint(&mut self, at: Timestamp) -> Result<Delta> {
        let all: BTreeSet<String> = self.rules.keys().cloned().collect();
        let run = self.fixpoint(Delta::default(), all, at)?;
        self.flush()?;
        Ok(run.delta)
    }

    /// Propagates `seed` through the rules. Rules named in `full` see the whole
    /// KB on their first evaluation. Contradictions introduced by new beliefs are
    /// resolved after each sweep; the loop ends when a sweep and its resolutions
    /// change nothing.
    pub(crate) fn fixpoint(
        &mut self,
        seed: Delta,
        mut full: BTreeSet<String>,
        at: Timestamp,
    ) -> Result<FixpointRun> {
        let seed_seq = self.state.seq();
        let mut journal = Journal { changes: Vec::new() };
        for id in &seed.retracted {
            journal.push(id.clone(), true, seed_seq);
        }
        for id in &seed.asserted {
            journal.push(id.clone(), false, seed_seq);
        }
        let seed_len = journal.len();

        let mut order: Vec<Rule> = self.rules.values().cloned().collect();
        order.sort_by(|a, b| (a.record.stratum, a.id()).cmp(&(b.record.stratum, b.id())));
        let mut cursors: BTreeMap<String, usize> = order.iter().map(|r| (r.id().to_string(), 0)).collect();

        let mut run = FixpointRun::default();
        let mut resolve_cursor = 0;
        let mut passes = 0usize;
        let mut previous_pass: BTreeSet<BeliefId> = BTreeSet::new();
        loop {
            passes += 1;
            let pass_start = journal.len();
            if passes > self.max_passes {
                let recent: BTreeSet<BeliefId> = journal.changes[pass_start.min(journal.len())..]
                    .iter()
                    .map(|c| c.id.clone())
                    .collect();
                let oscillating = previous_pass
                    .union(&recent)
                    .map(|id| id.to_string())
                    .collect();
                return Err(KbError::DivergenceGuard {
                    passes: self.max_passes,
                    oscillating,
                });
            }

            for rule in &order {
                let cursor = cursors[rule.id()];
                let delta = self.rule_delta(rule, &journal.changes[cursor..]);
                let is_full = full.remove(rule.id());
                if delta.is_empty() && !is_full {
                    cursors.insert(rule.id().to_string(), journal.len());
                    continue;
                }
                let output = rule.body.evaluate(&RuleInput {
                    state: &self.state,
                    delta: &delta,
                    full: is_full,
                    version: rule.record.version,
                });
                self.apply_output(rule, output, at, &mut journal, &mut run)?;
                cursors.insert(rule.id().to_string(), journal.len());
            }

            let fresh: BTreeSet<BeliefId> = journal.changes[resolve_cursor..]
                .iter()
                .filter(|c| !c.retracted && self.state.is_active(&c.id))
                .map(|c| c.id.clone())
                .collect();
            resolve_cursor = journal.len();
            for contradiction in tms::detect_contradictions(&self.state, &fresh, at) {
                if contradiction.parties.iter().any(|p| !self.state.is_active(p)) {
                    continue;
                }
                let (_, entries) = self.apply_resolution(&contradiction, at)?;
                let seq = self.state.seq();
                for e in &entries {
                    journal.push(e.id.clone(), true, seq);
                }
                run.retracted.extend(entries);
            }

            if journal.len() == pass_start {
                break;
            }
            previous_pass = journal.changes[pass_start..].iter().map(|c| c.id.clone()).collect();
        }

        // Net effect relative to the state before the command.
        let mut first_was_retract: BTreeMap<&BeliefId, bool> = BTreeMap::new();
        for c in &journal.changes {
            first_was_retract.entry(&c.id).or_insert(c.retracted);
        }
        for (id, was_retract) in &first_was_retract {
            let active_before = *was_retract;
            let active_now = self.state.is_active(id);
            if active_before != active_now {
                if active_now {
                    run.delta.asserted.insert((*id).clone());
                } else {
                    run.delta.retracted.insert((*id).clone());
                }
            }
        }
        let mut seen = BTreeSet::new();
        for c in &journal.changes[seed_len..] {
            if !c.retracted && self.state.is_active(&c.id) && seen.insert(c.id.clone()) {
                run.asserted.push(c.id.clone());
            }
        }
        if let (Some(first), Some(last)) = (journal.changes.first(), journal.changes.last()) {
            run.delta.origin_seq = (first.seq, last.seq);
        }

        self.status.last_fixpoint_seq = self.state.seq();
        self.status.passes += passes as u64;
        Ok(run)
    }

    fn rule_delta(&self, rule: &Rule, changes: &[Change]) -> Delta {
        let mut delta = Delta::default();
        let (mut lo, mut hi) = (u64::MAX, 0);
        for c in changes {
            let Some(b) = self.state.get(&c.id) else { continue };
            if !rule.wakes_on(b.kind(), c.retracted) {
                continue;
            }
            if self.state.is_active(&c.id) {
                delta.record_assert(c.id.clone());
            } else {
                delta.record_retract(c.id.clone());
            }
            lo = lo.min(c.seq);
            hi = hi.max(c.seq);
        }
        if !delta.is_empty() {
            delta.origin_seq = (lo, hi);
        }
        delta
    }

    fn apply_output(
        &mut self,
        rule: &Rule,
        output: super::RuleOutput,
        at: Timestamp,
        journal: &mut Journal,
        run: &mut FixpointRun,
    ) -> Result<()> {
        let mut withdrawn = output.withdrawn;
        withdrawn.sort();
        withdrawn.dedup();
        for id in withdrawn {
            let Some(b) = self.state.get(&id) else { continue };
            if !b.is_active() || b.is_explicit() {
                continue;
            }
            let own = self
                .state
                .justifications_of(&id)
                .iter()
                .any(|j| j.rule_id == rule.id());
            if !own {
                continue;
            }
            let reason = format!("withdrawn by rule {} v{}", rule.id(), rule.record.version);
            let cascade = self.retract_cascading(&id, &reason, at)?;
            let seq = self.state.seq();
            journal.push(id.clone(), true, seq);
            run.retracted.push(RetractedEntry { id, depth: 1 });
            for mut e in cascade {
                journal.push(e.id.clone(), true, seq);
                e.depth += 1;
                run.retracted.push(e);
            }
        }

        let mut derived = output.derived;
        derived.sort_by(|a, b| {
            (a.statement.kind(), a.statement.id(), &a.premises).cmp(&(b.statement.kind(), b.statement.id(), &b.premises))
        });
        derived.dedup_by(|a, b| a.statement == b.statement && a.premises == b.premises);
        for d in derived {
            if d.premises.is_empty() || d.premises.iter().any(|p| !self.state.is_active(p)) {
                continue;
            }
            if !rule.record.write_kinds.contains(&d.statement.kind()) {
                return Err(KbError::StratificationViolation {
                    rule: rule.id().to_string(),
                    conflicting: rule.id().to_string(),
                    reason: format!("derived undeclared kind {}", d.statement.kind()),
                });
            }
            let (id, changed) = self.put_derived(d.statement, rule.id(), d.premises, at)?;
            if changed {
                journal.push(id, false, self.state.seq());
            }
        }
        Ok(())
    }
}
