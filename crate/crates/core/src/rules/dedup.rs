use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::engine::{RuleBody, RuleInput, RuleOutput};
use crate::model::{FindingPair, IssueMembership, IssueRecord, ToolCategory};
use crate::rules::similarity::{similarity, Profile};
use crate::statement::{BeliefId, Statement, StatementKind};
use crate::store::KbState;

/// Links similar findings of the same tool category and groups linked
/// findings into issues (connected components).
#[derive(Debug, Clone)]
pub struct DedupRule {
    threshold: f64,
}

impl DedupRule {
    pub fn new(threshold: f64) -> Self {
        DedupRule { threshold }
    }
}

/// Distinct finding contents observed under one key, each with the smallest
/// observation id carrying it.
struct KeyProfiles {
    category: ToolCategory,
    variants: Vec<(Profile, BeliefId)>,
}

fn key_profiles(state: &KbState) -> BTreeMap<String, KeyProfiles> {
    let mut out: BTreeMap<String, KeyProfiles> = BTreeMap::new();
    for (key, ids) in state.observations() {
        let mut variants: Vec<(Profile, BeliefId)> = Vec::new();
        let mut category = None;
        for id in ids {
            let Some(f) = state.get(id).and_then(|b| b.statement.as_finding()) else { continue };
            category = Some(f.tool_category);
            let p = Profile::of(f);
            if !variants.iter().any(|(v, _)| *v == p) {
                variants.push((p, id.clone()));
            }
        }
        if let Some(category) = category {
            out.insert(key.clone(), KeyProfiles { category, variants });
        }
    }
    out
}

fn blocked_pairs(state: &KbState) -> BTreeSet<FindingPair> {
    state
        .active(StatementKind::AssessmentMade)
        .filter_map(|b| b.statement.as_assessment())
        .filter_map(|a| a.verdict.not_duplicate_pair())
        .collect()
}

impl DedupRule {
    /// Best-scoring observation pair for two keys, if it reaches the threshold.
    fn witness(&self, a: &KeyProfiles, b: &KeyProfiles) -> Option<(BeliefId, BeliefId)> {
        let mut best: Option<(f64, &BeliefId, &BeliefId)> = None;
        for (pa, ia) in &a.variants {
            for (pb, ib) in &b.variants {
                let s = similarity(pa, pb);
                let better = match best {
                    None => true,
                    Some((bs, ba, bb)) => s > bs || (s == bs && (ia, ib) < (ba, bb)),
                };
                if better {
                    best = Some((s, ia, ib));
                }
            }
        }
        best.filter(|(s, _, _)| *s >= self.threshold)
            .map(|(_, a, b)| (a.clone(), b.clone()))
    }

    fn affected_keys(&self, input: &RuleInput<'_>, profiles: &BTreeMap<String, KeyProfiles>) -> BTreeSet<String> {
        if input.full {
            return profiles.keys().cloned().collect();
        }
        let state = input.state;
        let mut keys = BTreeSet::new();
        for id in input.delta.ids() {
            let Some(b) = state.get(id) else { continue };
            match &b.statement {
                Statement::FindingObserved(f) => {
                    keys.insert(f.finding_key.clone());
                }
                Statement::AssessmentMade(a) => {
                    if let Some(pair) = a.verdict.not_duplicate_pair() {
                        keys.insert(pair.a);
                        keys.insert(pair.b);
                    }
                }
                Statement::DuplicateOf(pair) => {
                    keys.insert(pair.a.clone());
                    keys.insert(pair.b.clone());
                }
                Statement::IssueExists(issue) => keys.extend(issue.members.iter().cloned()),
                Statement::IssueMember(m) => {
                    keys.insert(m.finding_key.clone());
                }
                _ => {}
            }
        }
        keys
    }
}

impl RuleBody for DedupRule {
    fn evaluate(&self, input: &RuleInput<'_>) -> RuleOutput {
        let state = input.state;
        let mut out = RuleOutput::default();
        let profiles = key_profiles(state);
        let affected = self.affected_keys(input, &profiles);
        if affected.is_empty() {
            return out;
        }
        let blocked = blocked_pairs(state);

        // Existing links, minus those a human has ruled out.
        let mut edges: BTreeMap<String, BTreeMap<String, BeliefId>> = BTreeMap::new();
        let mut link = |a: &str, b: &str, id: &BeliefId| {
            edges.entry(a.to_string()).or_default().insert(b.to_string(), id.clone());
            edges.entry(b.to_string()).or_default().insert(a.to_string(), id.clone());
        };
        for b in state.active(StatementKind::DuplicateOf) {
            if let Statement::DuplicateOf(pair) = &b.statement {
                if !blocked.contains(pair) {
                    link(&pair.a, &pair.b, &b.id);
                }
            }
        }

        for key in affected.iter().filter(|k| profiles.contains_key(*k)) {
            let mine = &profiles[key];
            for (other, theirs) in &profiles {
                if other == key || theirs.category != mine.category {
                    continue;
                }
                // In a full pass each unordered pair is visited once.
                if input.full && other < key {
                    continue;
                }
                let pair = FindingPair::new(key.clone(), other.clone());
                if blocked.contains(&pair) {
                    continue;
                }
                if let Some((wa, wb)) = self.witness(mine, theirs) {
                    let statement = Statement::DuplicateOf(pair.clone());
                    let id = statement.id();
                    out.derive(statement, [wa, wb]);
                    link(&pair.a, &pair.b, &id);
                }
            }
        }

        // Components reachable from affected keys, with a spanning tree each.
        let mut placed: BTreeSet<String> = BTreeSet::new();
        let mut desired: BTreeSet<BeliefId> = BTreeSet::new();
        let mut recomputed: BTreeSet<String> = affected.clone();
        for start in affected.iter().filter(|k| profiles.contains_key(*k)) {
            if placed.contains(start) {
                continue;
            }
            let mut members = BTreeSet::from([start.clone()]);
            let mut tree: BTreeSet<BeliefId> = BTreeSet::new();
            let mut queue = VecDeque::from([start.clone()]);
            while let Some(k) = queue.pop_front() {
                if let Some(neighbours) = edges.get(&k) {
                    for (n, edge) in neighbours {
                        if members.insert(n.clone()) {
                            tree.insert(edge.clone());
                            queue.push_back(n.clone());
                        }
                    }
                }
            }
            placed.extend(members.iter().cloned());
            recomputed.extend(members.iter().cloned());

            let issue = IssueRecord {
                canonical_finding: members.first().expect("component is non-empty").clone(),
                members: members.clone(),
            };
            let statement = Statement::IssueExists(issue);
            let issue_id = statement.id();
            let mut premises = tree;
            for m in &members {
                premises.extend(state.observations_of(m).iter().cloned());
            }
            out.derive(statement, premises);
            desired.insert(issue_id.clone());
            for m in members {
                out.derive(
                    Statement::IssueMember(IssueMembership {
                        issue: issue_id.clone(),
                        finding_key: m,
                    }),
                    [issue_id.clone()],
                );
            }
        }

        for b in state.active(StatementKind::IssueExists) {
            if desired.contains(&b.id) {
                continue;
            }
            let stale = match &b.statement {
                Statement::IssueExists(issue) => input.full || !issue.members.is_disjoint(&recomputed),
                _ => false,
            };
            if stale {
                out.withdrawn.push(b.id.clone());
            }
        }
        out
    }
}
