//! Independent reference implementations used as oracles: a naive
//! stratified evaluator working directly on the rule syntax tree, brute
//! force reachability for recursion checks, and random program generators.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use edgelog::{parse_rule, Comparator, Const, Fact, Literal, Rule, Term};
use rand::seq::SliceRandom;
use rand::Rng;

pub type Binding = HashMap<String, Const>;

fn unify(term: &Term, value: Const, b: &mut Binding) -> bool {
    match term {
        Term::Const(c) => *c == value,
        Term::Var(v) => match b.get(v.name()) {
            Some(bound) => *bound == value,
            None => {
                b.insert(v.name().to_string(), value);
                true
            }
        },
    }
}

fn resolve(term: &Term, b: &Binding) -> Const {
    match term {
        Term::Const(c) => *c,
        Term::Var(v) => b[v.name()],
    }
}

fn holds(op: Comparator, l: Const, r: Const) -> bool {
    match op {
        Comparator::Eq => l == r,
        Comparator::Ne => l != r,
        _ => {
            let (a, b) = (l.as_number().unwrap(), r.as_number().unwrap());
            match op {
                Comparator::Gt => a > b,
                Comparator::Ge => a >= b,
                Comparator::Lt => a < b,
                Comparator::Le => a <= b,
                _ => unreachable!(),
            }
        }
    }
}

/// All head facts of one application of `rule` over `facts`: positive
/// atoms in source order, then comparisons, then negations (whose unbound
/// variables range over everything).
pub fn apply(rule: &Rule, facts: &HashSet<Fact>) -> HashSet<Fact> {
    assert!(rule.aggregate.is_none(), "the reference evaluator has no aggregates");
    let mut bindings = vec![Binding::new()];
    for lit in &rule.body {
        if let Literal::Pos(a) = lit {
            let mut next = Vec::new();
            for b in &bindings {
                for f in facts.iter().filter(|f| f.p == a.pred) {
                    let mut nb = b.clone();
                    if unify(&a.subject, f.s, &mut nb) && unify(&a.object, f.o, &mut nb) {
                        next.push(nb);
                    }
                }
            }
            bindings = next;
        }
    }
    for lit in &rule.body {
        match lit {
            Literal::Comp(c) => {
                bindings.retain(|b| holds(c.op, resolve(&c.left, b), resolve(&c.right, b)));
            }
            Literal::Bind(_) => panic!("the reference evaluator has no BIND"),
            _ => {}
        }
    }
    for lit in &rule.body {
        if let Literal::Neg(a) = lit {
            bindings.retain(|b| {
                !facts.iter().any(|f| {
                    let mut nb = b.clone();
                    f.p == a.pred && unify(&a.subject, f.s, &mut nb) && unify(&a.object, f.o, &mut nb)
                })
            });
        }
    }
    bindings
        .iter()
        .map(|b| Fact::new(rule.head.pred, resolve(&rule.head.subject, b), resolve(&rule.head.object, b)))
        .collect()
}

/// Predicate strata, or `None` when negation runs through recursion.
pub fn strata(rules: &[Rule]) -> Option<HashMap<Const, usize>> {
    let mut s: HashMap<Const, usize> = HashMap::new();
    let limit = rules.len() + 1;
    loop {
        let mut changed = false;
        for r in rules {
            let mut need = 0;
            for lit in &r.body {
                match lit {
                    Literal::Pos(a) => need = need.max(*s.get(&a.pred).unwrap_or(&0)),
                    Literal::Neg(a) => need = need.max(s.get(&a.pred).unwrap_or(&0) + 1),
                    _ => {}
                }
            }
            let cur = s.entry(r.head.pred).or_insert(0);
            if need > *cur {
                *cur = need;
                changed = true;
                if need > limit {
                    return None;
                }
            }
        }
        if !changed {
            return Some(s);
        }
    }
}

/// Naive stratified fixpoint; returns the derived facts not in `edb`.
pub fn naive_idb(rules: &[Rule], edb: &[Fact]) -> Option<HashSet<Fact>> {
    let strata = strata(rules)?;
    let mut all: HashSet<Fact> = edb.iter().copied().collect();
    let top = strata.values().copied().max().unwrap_or(0);
    for level in 0..=top {
        let layer: Vec<&Rule> = rules.iter().filter(|r| strata[&r.head.pred] == level).collect();
        loop {
            let mut grew = false;
            for r in &layer {
                for f in apply(r, &all) {
                    grew |= all.insert(f);
                }
            }
            if !grew {
                break;
            }
        }
    }
    let edb: HashSet<Fact> = edb.iter().copied().collect();
    Some(all.difference(&edb).copied().collect())
}

/// Rule-level dependency edges: (from, to, negative).
pub fn rule_edges(rules: &[Rule]) -> Vec<(usize, usize, bool)> {
    let mut out = Vec::new();
    for (i, ri) in rules.iter().enumerate() {
        for (j, rj) in rules.iter().enumerate() {
            for lit in &rj.body {
                match lit {
                    Literal::Pos(a) if a.pred == ri.head.pred => out.push((i, j, false)),
                    Literal::Neg(a) if a.pred == ri.head.pred => out.push((i, j, true)),
                    _ => {}
                }
            }
        }
    }
    out
}

/// Transitive closure of the rule graph by repeated relaxation.
pub fn reachability(rules: &[Rule]) -> Vec<Vec<bool>> {
    let n = rules.len();
    let mut reach = vec![vec![false; n]; n];
    for (a, b, _) in rule_edges(rules) {
        reach[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    reach
}

/// Whether some negative edge connects two rules of one component.
pub fn negation_in_cycle(rules: &[Rule]) -> bool {
    let reach = reachability(rules);
    rule_edges(rules)
        .into_iter()
        .any(|(a, b, neg)| neg && (a == b || (reach[a][b] && reach[b][a])))
}

pub const EDB_PREDS: [&str; 3] = ["e0", "e1", "e2"];
pub const IDB_PREDS: [&str; 4] = ["i0", "i1", "i2", "i3"];
pub const CONSTS: [&str; 4] = ["a", "b", "c", "d"];

fn term(rng: &mut impl Rng, vars: &[&str]) -> String {
    if rng.gen_bool(0.85) {
        vars.choose(rng).unwrap().to_string()
    } else {
        CONSTS.choose(rng).unwrap().to_string()
    }
}

/// A random range-restricted rule; negation is allowed on any predicate.
pub fn random_rule_text(rng: &mut impl Rng, id: &str, negation: bool) -> String {
    let preds: Vec<&str> = EDB_PREDS.iter().chain(&IDB_PREDS).copied().collect();
    let mut body = Vec::new();
    let mut bound: Vec<String> = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        let p = preds.choose(rng).unwrap();
        let (s, o) = (term(rng, &["X", "Y", "Z"]), term(rng, &["X", "Y", "Z"]));
        for t in [&s, &o] {
            if t.starts_with(char::is_uppercase) && !bound.contains(t) {
                bound.push(t.clone());
            }
        }
        body.push(format!("{p}({s}, {o})"));
    }
    if bound.is_empty() {
        body.push("e0(X, Y)".into());
        bound = vec!["X".into(), "Y".into()];
    }
    let pick = |rng: &mut dyn rand::RngCore| -> String {
        if rng.gen_bool(0.9) {
            bound.choose(rng).unwrap().clone()
        } else {
            CONSTS.choose(rng).unwrap().to_string()
        }
    };
    let head = IDB_PREDS.choose(rng).unwrap();
    let head = format!("{head}({}, {})", pick(rng), pick(rng));
    if negation && rng.gen_bool(0.4) {
        let p = preds.choose(rng).unwrap();
        let local = |rng: &mut dyn rand::RngCore| if rng.gen_bool(0.25) { "W".to_string() } else { pick(rng) };
        body.push(format!("not {p}({}, {})", local(rng), local(rng)));
    }
    if rng.gen_bool(0.25) {
        body.push(format!("COMP({}, !=, {})", pick(rng), pick(rng)));
    }
    format!("{id}: {head} :- {}.", body.join(" ∧ "))
}

pub fn random_rules(rng: &mut impl Rng, count: usize, negation: bool) -> Vec<Rule> {
    (1..=count)
        .map(|i| parse_rule(&random_rule_text(rng, &format!("r{i}"), negation)).unwrap())
        .collect()
}

pub fn random_facts(rng: &mut impl Rng, count: usize) -> Vec<Fact> {
    (0..count)
        .map(|_| {
            Fact::iri(
                EDB_PREDS.choose(rng).unwrap(),
                CONSTS.choose(rng).unwrap(),
                CONSTS.choose(rng).unwrap(),
            )
        })
        .collect()
}

pub fn as_set(facts: impl IntoIterator<Item = Fact>) -> HashSet<Fact> {
    facts.into_iter().collect()
}
