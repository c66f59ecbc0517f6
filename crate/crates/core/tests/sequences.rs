mod common;

use common::gen::{dominance_violations, issues_partition_findings, ranks_are_permutation, SequenceGen, Step};

fn run(seed: u64, steps: usize) {
    let mut kb = common::kb();
    let mut gen = SequenceGen::new(seed);
    let mut trace: Vec<Step> = Vec::new();
    for _ in 0..steps {
        trace.push(gen.step(&mut kb));
        let audit = kb.well_founded_audit();
        assert!(audit.is_empty(), "seed {seed}: unfounded {audit:?} after {trace:#?}");
        assert!(ranks_are_permutation(kb.state()), "seed {seed}: ranks after {trace:#?}");
        assert!(issues_partition_findings(kb.state()), "seed {seed}: partition after {trace:#?}");
        let bad = dominance_violations(kb.state());
        assert!(bad.is_empty(), "seed {seed}: {bad:?} after {trace:#?}");
    }
    let oracle = kb.full_recompute().unwrap();
    let inc = kb.state().active_set();
    let full = oracle.active_set();
    if inc != full {
        let only_inc: Vec<_> = inc.difference(&full).map(|id| kb.get(id).unwrap().statement.clone()).collect();
        let only_full: Vec<_> = full.difference(&inc).map(|id| oracle.get(id).unwrap().statement.clone()).collect();
        panic!("seed {seed}: incremental-only {only_inc:#?}\nfull-only {only_full:#?}\ntrace {trace:#?}");
    }
}

#[test]
fn random_sequences_match_full_recompute() {
    for seed in 0..60 {
        run(seed, 40);
    }
}
