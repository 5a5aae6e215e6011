use std::collections::HashSet;

use edgelog::{Const, DataStore, DataStoreBag, Fact, Pattern, StoreArena};
use proptest::prelude::*;

fn fact(p: u8, s: u8, o: u8) -> Fact {
    Fact::iri(&format!("p{p}"), &format!("n{s}"), &format!("n{o}"))
}

#[derive(Clone, Debug)]
enum Op {
    Insert(u8, u8, u8),
    Delete(u8, u8, u8),
}

fn op() -> impl Strategy<Value = Op> {
    (any::<bool>(), 0u8..4, 0u8..12, 0u8..12).prop_map(|(ins, p, s, o)| {
        if ins {
            Op::Insert(p, s, o)
        } else {
            Op::Delete(p, s, o)
        }
    })
}

fn pattern() -> impl Strategy<Value = (u8, Option<u8>, Option<u8>)> {
    (0u8..5, proptest::option::of(0u8..12), proptest::option::of(0u8..12))
}

fn to_pattern((p, s, o): (u8, Option<u8>, Option<u8>)) -> Pattern {
    Pattern::new(
        Const::iri(&format!("p{p}")),
        s.map(|s| Const::iri(&format!("n{s}"))),
        o.map(|o| Const::iri(&format!("n{o}"))),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // 16 cases x 1000 operations, each followed by a full index cross-check.
    #[test]
    fn indexes_agree_under_random_operations(ops in proptest::collection::vec(op(), 1000)) {
        let mut ds = DataStore::new();
        let mut model: HashSet<Fact> = HashSet::new();
        for op in ops {
            match op {
                Op::Insert(p, s, o) => prop_assert_eq!(ds.insert(fact(p, s, o)), model.insert(fact(p, s, o))),
                Op::Delete(p, s, o) => prop_assert_eq!(ds.delete(&fact(p, s, o)), model.remove(&fact(p, s, o))),
            }
            prop_assert!(ds.check_invariants());
            prop_assert_eq!(ds.len(), model.len());
        }
        let stored: HashSet<Fact> = ds.facts().collect();
        prop_assert_eq!(stored, model);
    }

    #[test]
    fn store_match_is_filter(facts in proptest::collection::vec((0u8..4, 0u8..12, 0u8..12), 0..80), pat in pattern()) {
        let ds: DataStore = facts.iter().map(|&(p, s, o)| fact(p, s, o)).collect();
        let pat = to_pattern(pat);
        let got: HashSet<Fact> = ds.matches(&pat).into_iter().collect();
        let want: HashSet<Fact> = ds.facts().filter(|f| pat.matches(f)).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn bag_match_is_union_of_members(
        members in proptest::collection::vec(proptest::collection::vec((0u8..4, 0u8..8, 0u8..8), 0..30), 0..5),
        pat in pattern(),
    ) {
        let mut arena = StoreArena::new();
        let mut bag = DataStoreBag::new();
        let mut ids = Vec::new();
        for m in &members {
            let id = arena.insert(m.iter().map(|&(p, s, o)| fact(p, s, o)).collect());
            bag.add_store(&arena, id);
            ids.push(id);
        }
        let before: Vec<u64> = ids.iter().map(|&id| arena.get(id).mutations()).collect();
        let pat = to_pattern(pat);
        let got = bag.matches(&arena, &pat);
        let unique: HashSet<Fact> = got.iter().copied().collect();
        prop_assert_eq!(unique.len(), got.len(), "duplicates leaked through the bag");
        let mut naive = HashSet::new();
        for &id in &ids {
            naive.extend(arena.get(id).facts().filter(|f| pat.matches(f)));
        }
        prop_assert_eq!(unique, naive);
        let after: Vec<u64> = ids.iter().map(|&id| arena.get(id).mutations()).collect();
        prop_assert_eq!(before, after, "bag operations must not write to member stores");
    }

    #[test]
    fn refreshed_index_tracks_members(
        initial in proptest::collection::vec((0u8..4, 0u8..6, 0u8..6), 0..20),
        edits in proptest::collection::vec(op(), 0..40),
    ) {
        let mut arena = StoreArena::new();
        let id = arena.insert(initial.iter().map(|&(p, s, o)| fact(p, s, o)).collect());
        let mut bag = DataStoreBag::new();
        bag.add_store(&arena, id);
        for e in edits {
            let ds = arena.get_mut(id);
            match e {
                Op::Insert(p, s, o) => { ds.insert(fact(p, s, o)); }
                Op::Delete(p, s, o) => { ds.delete(&fact(p, s, o)); }
            }
        }
        bag.refresh_index(&arena);
        let mut indexed: Vec<Const> = bag.indexed_predicates().collect();
        let mut present: Vec<Const> = arena.get(id).predicates().collect();
        indexed.sort_by(|a, b| a.cmp_value(*b));
        present.sort_by(|a, b| a.cmp_value(*b));
        prop_assert_eq!(indexed, present);
    }
}

#[test]
fn unindexed_predicate_touches_no_store() {
    let mut arena = StoreArena::new();
    let a = arena.insert([fact(0, 1, 2)].into_iter().collect());
    let b = arena.insert([fact(1, 1, 2)].into_iter().collect());
    let mut bag = DataStoreBag::new();
    bag.add_store(&arena, a);
    bag.add_store(&arena, b);
    let probes = |arena: &StoreArena| arena.get(a).probes() + arena.get(b).probes();
    let before = probes(&arena);
    assert!(bag.matches(&arena, &Pattern::any(Const::iri("p9"))).is_empty());
    assert_eq!(probes(&arena), before);
    assert_eq!(bag.matches(&arena, &Pattern::any(Const::iri("p0"))).len(), 1);
    assert_eq!(arena.get(a).probes(), 1);
    assert_eq!(arena.get(b).probes(), 0);
}

#[test]
fn index_construction_by_hand() {
    let mut ds = DataStore::new();
    ds.insert(Fact::iri("p", "a", "b"));
    ds.insert(Fact::iri("p", "a", "c"));
    ds.insert(Fact::iri("p", "d", "b"));
    let by_subject = ds.matches(&Pattern::new(Const::iri("p"), Some(Const::iri("a")), None));
    let by_object = ds.matches(&Pattern::new(Const::iri("p"), None, Some(Const::iri("b"))));
    assert_eq!(
        by_subject.into_iter().collect::<HashSet<_>>(),
        [Fact::iri("p", "a", "b"), Fact::iri("p", "a", "c")].into_iter().collect()
    );
    assert_eq!(
        by_object.into_iter().collect::<HashSet<_>>(),
        [Fact::iri("p", "a", "b"), Fact::iri("p", "d", "b")].into_iter().collect()
    );
    assert!(ds.matches(&Pattern::any(Const::iri("q"))).is_empty());
}
