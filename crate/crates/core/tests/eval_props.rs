mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use common::{as_set, naive_idb, random_facts, random_rules};
use edgelog::eval::{eval_rule_with_order, is_legal_order, View};
use edgelog::workload::{ds2, RuleSet};
use edgelog::{DataStore, Engine, Error, Hrdg, NodeId};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Kahn's algorithm releasing a random ready node each step.
fn random_topological_order(h: &Hrdg, rng: &mut impl Rng) -> Vec<NodeId> {
    let mut indeg: BTreeMap<&NodeId, usize> = h.nodes.iter().map(|n| (n, 0)).collect();
    let edges: BTreeSet<(&NodeId, &NodeId)> = h
        .pos
        .iter()
        .chain(&h.neg)
        .filter(|(a, b)| a != b)
        .map(|(a, b)| (a, b))
        .collect();
    for (_, b) in &edges {
        *indeg.get_mut(b).unwrap() += 1;
    }
    let mut order = Vec::new();
    while !indeg.is_empty() {
        let ready: Vec<&NodeId> = indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
        let pick = *ready.choose(rng).unwrap();
        indeg.remove(pick);
        for (a, b) in &edges {
            if *a == pick {
                *indeg.get_mut(b).unwrap() -= 1;
            }
        }
        order.push(pick.clone());
    }
    order
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(160))]

    #[test]
    fn seminaive_matches_naive_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (count, nfacts) = (rng.gen_range(1..=6), rng.gen_range(0..=30));
        let rules = random_rules(&mut rng, count, true);
        let facts = random_facts(&mut rng, nfacts);
        let oracle = naive_idb(&rules, &facts);
        let mut engine = Engine::new();
        let loaded = engine.insert_rules(rules.clone()).and_then(|_| engine.insert_facts(facts.clone())).and_then(|_| engine.materialize().map(|_| ()));
        match (oracle, loaded) {
            (Some(want), Ok(())) => prop_assert_eq!(as_set(engine.idb_facts()), want, "rules {:?}", rules),
            (None, Err(Error::UnsafeProgram { .. })) => {}
            (o, l) => prop_assert!(false, "oracle stratifiable={} engine={:?} rules {:?}", o.is_some(), l, rules),
        }
    }

    #[test]
    fn derived_facts_independent_of_join_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rule = random_rules(&mut rng, 1, true).pop().unwrap();
        let mut facts = random_facts(&mut rng, 25);
        // Feed the derived predicates as plain data so every atom can match.
        for f in random_facts(&mut rng, 15) {
            let name = match f.p.to_string().as_str() { "e0" => "i0", "e1" => "i1", _ => "i2" };
            facts.push(edgelog::Fact::new(edgelog::Const::iri(name), f.s, f.o));
        }
        let ds: DataStore = facts.into_iter().collect();
        let view = View::of_store(&ds);
        let mut reference: Option<HashSet<edgelog::Fact>> = None;
        let mut legal = 0;
        for order in permutations(rule.body.len()) {
            if !is_legal_order(&rule, &order) {
                continue;
            }
            legal += 1;
            let got = as_set(eval_rule_with_order(&rule, &order, &view).unwrap());
            match &reference {
                None => reference = Some(got),
                Some(r) => prop_assert_eq!(&got, r, "order {:?} of {}", order, rule),
            }
        }
        prop_assert!(legal >= 1);
    }
}

#[test]
fn rs3_result_independent_of_topological_order() {
    let facts = ds2(40, 11);
    let mut base = Engine::new();
    base.insert_rules(RuleSet::Rs3.rules()).unwrap();
    base.insert_facts(facts).unwrap();
    let mut reference = base.clone();
    reference.materialize().unwrap();
    let want = reference.node_idbs();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut distinct = HashSet::new();
    for _ in 0..40 {
        let order = random_topological_order(base.hrdg(), &mut rng);
        assert!(base.hrdg().is_topological(&order));
        distinct.insert(order.clone());
        let mut e = base.clone();
        e.materialize_in_order(&order).unwrap();
        assert_eq!(e.node_idbs(), want);
    }
    assert!(distinct.len() > 10, "sampled too few distinct orders");
}

#[test]
fn rs2_matches_naive_oracle() {
    for seed in [1, 2, 3] {
        let facts = ds2(30, seed);
        for set in [RuleSet::Rs2, RuleSet::Rs3] {
            let e = Engine::with_program(set.rules(), facts.clone()).unwrap();
            let want = naive_idb(&set.rules(), &facts).unwrap();
            assert_eq!(as_set(e.idb_facts()), want, "{} seed {seed}", set.name());
        }
    }
}
