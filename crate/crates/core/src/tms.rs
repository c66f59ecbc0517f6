//! Justification-based truth maintenance.
//!
//! Derived beliefs carry one or more justifications (rule + premises). A derived
//! belief stays Active while at least one justification has all premises Active.
//! Conflicts are limited to a closed incompatibility table (see
//! [`Statement::incompatible_with`]) and are settled by source authority: human
//! input first, then recency.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::Timestamp;
use crate::statement::{BeliefId, Statement, Topic};
use crate::store::{Belief, KbState};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JustificationId(String);

impl JustificationId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for JustificationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Justification {
    pub id: JustificationId,
    pub rule_id: String,
    pub rule_version: u32,
    pub premises: BTreeSet<BeliefId>,
    pub conclusion: BeliefId,
}

impl Justification {
    pub fn new(
        rule_id: String,
        rule_version: u32,
        premises: BTreeSet<BeliefId>,
        conclusion: BeliefId,
    ) -> Self {
        let mut h = Sha256::new();
        h.update(rule_id.as_bytes());
        h.update([0u8]);
        h.update(rule_version.to_be_bytes());
        for p in &premises {
            h.update(p.as_str().as_bytes());
            h.update([0u8]);
        }
        h.update(b"=>");
        h.update(conclusion.as_str().as_bytes());
        let id = JustificationId(hex::encode(&h.finalize()[..16]));
        Justification {
            id,
            rule_id,
            rule_version,
            premises,
            conclusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contradiction {
    pub topic: Topic,
    pub parties: BTreeSet<BeliefId>,
    pub detected_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResolutionRule {
    HumanOverMachine,
    NewerHumanOverOlderHuman,
    NewerReportOverOlderReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub kept: BeliefId,
    pub retracted: BTreeSet<BeliefId>,
    pub rule: ResolutionRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetractedEntry {
    pub id: BeliefId,
    pub depth: u32,
}

/// What a revision changed. Serialized for API clients.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionReport {
    pub root: Option<BeliefId>,
    pub retracted: Vec<RetractedEntry>,
    /// Beliefs (re-)asserted by the fixpoint that followed.
    #[serde(default)]
    pub rederived: Vec<BeliefId>,
    pub rederivation_scheduled: bool,
}

impl RevisionReport {
    pub fn retracted_ids(&self) -> BTreeSet<BeliefId> {
        self.retracted.iter().map(|r| r.id.clone()).collect()
    }
}

/// Weight of a belief in conflict resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Authority {
    /// Grounded in human input; carries the newest human timestamp in its support.
    Human(Timestamp),
    /// Machine-derived; carries the newest report timestamp in its premise closure.
    Machine(Option<Timestamp>),
}

impl Authority {
    fn rank(self) -> (u8, Option<Timestamp>) {
        match self {
            Authority::Human(t) => (1, Some(t)),
            Authority::Machine(t) => (0, t),
        }
    }
}

impl PartialOrd for Authority {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Authority {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank().cmp(&other.rank())
    }
}

/// Computes authorities with memoization over the live justification graph.
pub struct AuthorityOracle<'a> {
    state: &'a KbState,
    human: BTreeMap<BeliefId, Option<Timestamp>>,
    machine: BTreeMap<BeliefId, Option<Timestamp>>,
}

impl<'a> AuthorityOracle<'a> {
    pub fn new(state: &'a KbState) -> Self {
        AuthorityOracle {
            state,
            human: BTreeMap::new(),
            machine: BTreeMap::new(),
        }
    }

    pub fn authority(&mut self, id: &BeliefId) -> Authority {
        match self.human_time(id) {
            Some(t) => Authority::Human(t),
            None => Authority::Machine(self.report_time(id)),
        }
    }

    fn live_premises(&self, b: &Belief) -> Vec<BeliefId> {
        self.state
            .justifications_of(&b.id)
            .into_iter()
            .filter(|j| self.state.justification_is_live(j))
            .flat_map(|j| j.premises.iter().cloned())
            .collect()
    }

    fn human_time(&mut self, id: &BeliefId) -> Option<Timestamp> {
        if let Some(t) = self.human.get(id) {
            return *t;
        }
        // Guard against re-entry; the graph is acyclic so this is never read back.
        self.human.insert(id.clone(), None);
        let state = self.state;
        let result = state.get(id).and_then(|b| {
            let own = b
                .explicit_sources()
                .filter(|(s, _)| s.is_human())
                .map(|(_, at)| match &b.statement {
                    Statement::AssessmentMade(a) => a.at,
                    _ => at,
                })
                .max();
            let inherited = self
                .live_premises(b)
                .iter()
                .filter_map(|p| self.human_time(p))
                .max();
            own.max(inherited)
        });
        self.human.insert(id.clone(), result);
        result
    }

    fn report_time(&mut self, id: &BeliefId) -> Option<Timestamp> {
        if let Some(t) = self.machine.get(id) {
            return *t;
        }
        self.machine.insert(id.clone(), None);
        let state = self.state;
        let result = state.get(id).and_then(|b| {
            let own = b
                .explicit_sources()
                .filter(|(s, _)| !s.is_human())
                .map(|(_, at)| at)
                .max();
            let inherited = self
                .live_premises(b)
                .iter()
                .filter_map(|p| self.report_time(p))
                .max();
            own.max(inherited)
        });
        self.machine.insert(id.clone(), result);
        result
    }

    /// Orders beliefs so that the strongest comes first. Ties go to the smaller id.
    pub fn precedence(&mut self, a: &BeliefId, b: &BeliefId) -> Ordering {
        self.authority(b)
            .cmp(&self.authority(a))
            .then_with(|| a.cmp(b))
    }
}

/// Contradictions on topics touched by `delta`. Each contradiction groups the
/// dominant belief of a topic with every Active belief incompatible with it.
pub fn detect_contradictions(
    state: &KbState,
    delta: &BTreeSet<BeliefId>,
    detected_at: Timestamp,
) -> Vec<Contradiction> {
    let topics: BTreeSet<Topic> = delta
        .iter()
        .filter(|id| state.is_active(id))
        .filter_map(|id| state.get(id).and_then(|b| b.statement.topic()))
        .collect();

    let mut oracle = AuthorityOracle::new(state);
    let mut found = Vec::new();
    for topic in topics {
        let mut members: Vec<BeliefId> = state.topic_members(&topic).iter().cloned().collect();
        if members.len() < 2 {
            continue;
        }
        members.sort_by(|a, b| oracle.precedence(a, b));
        let dominant = &members[0];
        let dominant_stmt = &state.get(dominant).expect("indexed belief exists").statement;
        let mut parties: BTreeSet<BeliefId> = members[1..]
            .iter()
            .filter(|m| {
                let s = &state.get(m).expect("indexed belief exists").statement;
                s.incompatible_with(dominant_stmt)
            })
            .cloned()
            .collect();
        if parties.is_empty() {
            continue;
        }
        parties.insert(dominant.clone());
        if parties.iter().any(|p| delta.contains(p)) {
            found.push(Contradiction {
                topic,
                parties,
                detected_at,
            });
        }
    }
    found
}

/// Picks the surviving party. Total: the id tiebreak orders any two parties.
pub fn choose_resolution(state: &KbState, contradiction: &Contradiction) -> Resolution {
    let mut oracle = AuthorityOracle::new(state);
    let mut parties: Vec<BeliefId> = contradiction.parties.iter().cloned().collect();
    parties.sort_by(|a, b| oracle.precedence(a, b));
    let kept = parties.remove(0);
    let rule = match oracle.authority(&kept) {
        Authority::Human(_) => {
            if parties
                .iter()
                .any(|p| matches!(oracle.authority(p), Authority::Machine(_)))
            {
                ResolutionRule::HumanOverMachine
            } else {
                ResolutionRule::NewerHumanOverOlderHuman
            }
        }
        Authority::Machine(_) => ResolutionRule::NewerReportOverOlderReport,
    };
    Resolution {
        kept,
        retracted: parties.into_iter().collect(),
        rule,
    }
}

/// Beliefs that lose all support once `roots` are gone, in topological order.
/// Roots themselves are not listed.
pub fn plan_cascade(state: &KbState, roots: &BTreeSet<BeliefId>) -> Vec<RetractedEntry> {
    let mut gone: BTreeSet<BeliefId> = roots.clone();
    let mut out = Vec::new();
    let mut queue: VecDeque<(BeliefId, u32)> = roots.iter().map(|r| (r.clone(), 0)).collect();
    while let Some((id, depth)) = queue.pop_front() {
        for candidate in state.dependents_of(&id) {
            if gone.contains(&candidate) || !state.is_active(&candidate) {
                continue;
            }
            let belief = state.get(&candidate).expect("dependent exists");
            if belief.is_explicit() {
                continue;
            }
            let supported = state.justifications_of(&candidate).iter().any(|j| {
                j.premises
                    .iter()
                    .all(|p| state.is_active(p) && !gone.contains(p))
            });
            if !supported {
                gone.insert(candidate.clone());
                out.push(RetractedEntry {
                    id: candidate.clone(),
                    depth: depth + 1,
                });
                queue.push_back((candidate, depth + 1));
            }
        }
    }
    out
}

/// Active derived beliefs with no justification grounded in Active explicit beliefs.
pub fn well_founded_audit(state: &KbState) -> Vec<BeliefId> {
    let mut memo: BTreeMap<BeliefId, bool> = BTreeMap::new();
    let mut bad = Vec::new();
    for id in state.active_set() {
        if !grounded(state, &id, &mut memo) {
            bad.push(id);
        }
    }
    bad
}

fn grounded(state: &KbState, id: &BeliefId, memo: &mut BTreeMap<BeliefId, bool>) -> bool {
    if let Some(v) = memo.get(id) {
        return *v;
    }
    let Some(b) = state.get(id) else {
        return false;
    };
    if !b.is_active() {
        return false;
    }
    if b.is_explicit() {
        memo.insert(id.clone(), true);
        return true;
    }
    // Provisional value breaks any cycle a corrupted graph might contain.
    memo.insert(id.clone(), false);
    let ok = state
        .justifications_of(id)
        .iter()
        .any(|j| j.premises.iter().all(|p| grounded(state, p, memo)));
    memo.insert(id.clone(), ok);
    ok
}
