//! Per-node fixpoints: semi-naive materialization and delete/rederive
//! maintenance under input changes.

use std::ops::ControlFlow;
use std::sync::Arc;

use super::join::{eval_aggregate, Bindings, Compiled};
use super::plan::plan_rule;
use super::View;
use crate::error::Result;
use crate::model::{Atom, Const, Fact, Literal, RelKey, Rule, RuleId, Term, Var};
use crate::storage::DataStore;

/// Instrumentation for one hyper-node.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeStats {
    /// Rule bodies executed (one per rule variant run, aggregate run, or
    /// rederivation check).
    pub evaluations: u64,
    /// Fixpoint rounds.
    pub iterations: u64,
    /// Facts added to the node's store.
    pub derived: u64,
    pub overdeleted: u64,
    pub rederived: u64,
    /// Facts newly derived in each round, in order.
    pub deltas: Vec<usize>,
}

impl NodeStats {
    pub fn absorb(&mut self, other: &NodeStats) {
        self.evaluations += other.evaluations;
        self.iterations += other.iterations;
        self.derived += other.derived;
        self.overdeleted += other.overdeleted;
        self.rederived += other.rederived;
        self.deltas.extend_from_slice(&other.deltas);
    }
}

/// The rules of one hyper-node, compiled, with their recursive occurrences
/// marked.
pub struct NodeProgram {
    pub rules: Vec<Arc<Rule>>,
    compiled: Vec<Compiled>,
    /// `recursive[r][i]`: literal `i` of rule `r` is a positive atom reading a
    /// predicate this node defines.
    recursive: Vec<Vec<bool>>,
}

impl NodeProgram {
    pub fn new(rules: Vec<Arc<Rule>>) -> NodeProgram {
        let heads: Vec<RelKey> = rules.iter().map(|r| r.head.key()).collect();
        let recursive = rules
            .iter()
            .map(|r| {
                r.body
                    .iter()
                    .map(|l| match l {
                        Literal::Pos(a) => heads.iter().any(|h| h.overlaps(&a.key())),
                        _ => false,
                    })
                    .collect()
            })
            .collect();
        let compiled = rules.iter().map(|r| Compiled::new(r)).collect();
        NodeProgram {
            rules,
            compiled,
            recursive,
        }
    }

    pub fn is_aggregate(&self) -> bool {
        self.rules.iter().any(|r| r.is_aggregate())
    }

    pub fn reads(&self, key: RelKey) -> bool {
        self.rules
            .iter()
            .any(|r| r.body_keys().any(|k| k.overlaps(&key)))
    }
}

fn literal_key(rule: &Rule, i: usize) -> Option<RelKey> {
    match &rule.body[i] {
        Literal::Pos(a) | Literal::Neg(a) => Some(a.key()),
        _ => None,
    }
}

/// Plans `rule` against the views it will read, then runs it.
fn run(
    rule: &Rule,
    compiled: &Compiled,
    views: &[&View],
    init: Option<Vec<Option<Const>>>,
    stats: &mut NodeStats,
    emit: &mut dyn FnMut(&Bindings) -> ControlFlow<()>,
) -> Result<()> {
    let prebound: Vec<Var> = match &init {
        Some(b) => rule
            .head
            .vars()
            .filter(|v| compiled.slot(v).is_some_and(|i| b[i].is_some()))
            .cloned()
            .collect(),
        None => Vec::new(),
    };
    let plan = plan_rule(
        rule,
        |i| literal_key(rule, i).map_or(0, |k| views[i].count_key(k)),
        &prebound,
    )?;
    let mut b = init.unwrap_or_else(|| vec![None; compiled.num_slots()]);
    stats.evaluations += 1;
    compiled.run(&plan.order(), views, &mut b, emit)
}

/// Copy of `rule` where negated literal `k` becomes a positive guard atom.
/// With `keep_negation` the negation stays and the guard is appended, its
/// local variables renamed so they do not constrain the negation.
fn guard_rule(rule: &Rule, k: usize, keep_negation: bool) -> Rule {
    let Literal::Neg(atom) = &rule.body[k] else {
        unreachable!("guard over a negated literal")
    };
    let mut g = rule.clone();
    if !keep_negation {
        g.body[k] = Literal::Pos(atom.clone());
        return g;
    }
    let binders: Vec<&Var> = rule
        .body
        .iter()
        .flat_map(|l| match l {
            Literal::Pos(a) => a.vars().collect::<Vec<_>>(),
            Literal::Bind(b) => vec![&b.target],
            _ => Vec::new(),
        })
        .collect();
    let rename = |t: &Term| match t {
        Term::Var(v) if !binders.contains(&v) => {
            Term::Var(Var::new(&format!("?guard_{}", v.name().trim_start_matches('?'))))
        }
        other => other.clone(),
    };
    g.body.push(Literal::Pos(Atom::new(
        atom.pred,
        rename(&atom.subject),
        rename(&atom.object),
    )));
    g
}

/// Evaluates the selected rules once against `input ∪ idb` and returns the
/// facts not yet in `idb`.
fn evaluate_once(
    prog: &NodeProgram,
    select: impl Fn(&Rule) -> bool,
    input: &View,
    idb: &DataStore,
    stats: &mut NodeStats,
) -> Result<DataStore> {
    let mut new = DataStore::new();
    let full = input.clone().with_store(idb);
    for (rule, compiled) in prog.rules.iter().zip(&prog.compiled) {
        if !select(rule) {
            continue;
        }
        if rule.is_aggregate() {
            stats.evaluations += 1;
            for f in eval_aggregate(rule, &full)? {
                if !idb.contains(&f) {
                    new.insert(f);
                }
            }
            continue;
        }
        let views = vec![&full; rule.body.len()];
        run(rule, compiled, &views, None, stats, &mut |b| {
            let f = compiled.head_fact(b);
            if !idb.contains(&f) {
                new.insert(f);
            }
            ControlFlow::Continue(())
        })?;
    }
    Ok(new)
}

fn absorb_round(idb: &mut DataStore, new: &DataStore, stats: &mut NodeStats) {
    stats.iterations += 1;
    stats.deltas.push(new.len());
    for f in new.facts() {
        if idb.insert(f) {
            stats.derived += 1;
        }
    }
}

/// Semi-naive continuation: repeatedly evaluates each rule once per
/// recursive occurrence, pinning that occurrence to the last round's new
/// facts and earlier recursive occurrences to the facts known before it.
pub(crate) fn seminaive(
    prog: &NodeProgram,
    input: &View,
    idb: &mut DataStore,
    mut delta: DataStore,
    stats: &mut NodeStats,
) -> Result<()> {
    while !delta.is_empty() {
        let mut new = DataStore::new();
        {
            let full = input.clone().with_store(idb);
            let old = full.clone().excluding(&delta);
            let dview = View::of_store(&delta);
            for (ri, (rule, compiled)) in prog.rules.iter().zip(&prog.compiled).enumerate() {
                let rec = &prog.recursive[ri];
                for j in (0..rule.body.len()).filter(|&j| rec[j]) {
                    let key = literal_key(rule, j).expect("recursive literals are atoms");
                    if delta.count_key(key) == 0 {
                        continue;
                    }
                    let views: Vec<&View> = (0..rule.body.len())
                        .map(|i| {
                            if i == j {
                                &dview
                            } else if rec[i] && i < j {
                                &old
                            } else {
                                &full
                            }
                        })
                        .collect();
                    run(rule, compiled, &views, None, stats, &mut |b| {
                        let f = compiled.head_fact(b);
                        if !idb.contains(&f) {
                            new.insert(f);
                        }
                        ControlFlow::Continue(())
                    })?;
                }
            }
        }
        absorb_round(idb, &new, stats);
        delta = new;
    }
    Ok(())
}

/// Full evaluation of a node from its current store contents (normally
/// empty) to fixpoint.
pub(crate) fn materialize_node(
    prog: &NodeProgram,
    input: &View,
    idb: &mut DataStore,
    stats: &mut NodeStats,
) -> Result<()> {
    let new = evaluate_once(prog, |_| true, input, idb, stats)?;
    absorb_round(idb, &new, stats);
    seminaive(prog, input, idb, new, stats)
}

/// Adds newly inserted rules to a node whose store already holds the
/// fixpoint of its old rules: evaluates the new rules in full, then
/// continues semi-naively with all rules from those derivations.
pub(crate) fn extend_with_rules(
    prog: &NodeProgram,
    new_rules: &[RuleId],
    input: &View,
    idb: &mut DataStore,
    stats: &mut NodeStats,
) -> Result<()> {
    let new = evaluate_once(prog, |r| new_rules.contains(&r.id), input, idb, stats)?;
    absorb_round(idb, &new, stats);
    seminaive(prog, input, idb, new, stats)
}

/// Delete/rederive for one node whose inputs changed by `dplus` (now
/// visible, previously not) and `dminus` (previously visible, now not).
/// `input` reads the new inputs; `idb` holds the fixpoint over the old ones
/// and is updated in place to the fixpoint over the new ones.
pub(crate) fn dred(
    prog: &NodeProgram,
    input: &View,
    dplus: &DataStore,
    dminus: &DataStore,
    idb: &mut DataStore,
    stats: &mut NodeStats,
) -> Result<()> {
    debug_assert!(!prog.is_aggregate(), "aggregate nodes are recomputed");
    let in_old = input.clone().with_store(dminus).excluding(dplus);
    let dm = View::of_store(dminus);
    let dp = View::of_store(dplus);

    // Overdelete: everything with an old derivation that used a removed
    // input, a newly blocking negated fact, or an overdeleted fact.
    let mut over = DataStore::new();
    {
        let full_old = in_old.clone().with_store(idb);
        for (rule, compiled) in prog.rules.iter().zip(&prog.compiled) {
            for (j, lit) in rule.body.iter().enumerate() {
                let (guard, view) = match lit {
                    Literal::Pos(a) if dminus.count_key(a.key()) > 0 => (None, &dm),
                    Literal::Neg(a) if dplus.count_key(a.key()) > 0 => {
                        (Some(guard_rule(rule, j, false)), &dp)
                    }
                    _ => continue,
                };
                let views: Vec<&View> = (0..rule.body.len())
                    .map(|i| if i == j { view } else { &full_old })
                    .collect();
                let (r, c) = match &guard {
                    Some(g) => (g, &Compiled::new(g)),
                    None => (&**rule, compiled),
                };
                run(r, c, &views, None, stats, &mut |b| {
                    let f = c.head_fact(b);
                    if idb.contains(&f) {
                        over.insert(f);
                    }
                    ControlFlow::Continue(())
                })?;
            }
        }
        let mut frontier = over.clone();
        while !frontier.is_empty() {
            let mut next = DataStore::new();
            let fview = View::of_store(&frontier);
            for (ri, (rule, compiled)) in prog.rules.iter().zip(&prog.compiled).enumerate() {
                let rec = &prog.recursive[ri];
                for j in (0..rule.body.len()).filter(|&j| rec[j]) {
                    let key = literal_key(rule, j).expect("atom");
                    if frontier.count_key(key) == 0 {
                        continue;
                    }
                    let views: Vec<&View> = (0..rule.body.len())
                        .map(|i| if i == j { &fview } else { &full_old })
                        .collect();
                    run(rule, compiled, &views, None, stats, &mut |b| {
                        let f = compiled.head_fact(b);
                        if idb.contains(&f) && !over.contains(&f) {
                            next.insert(f);
                        }
                        ControlFlow::Continue(())
                    })?;
                }
            }
            over.extend(next.facts());
            frontier = next;
        }
    }
    let overdeleted: Vec<Fact> = over.facts().collect();
    for f in &overdeleted {
        idb.delete(f);
    }
    stats.overdeleted += overdeleted.len() as u64;

    // Rederive: overdeleted facts with a one-step derivation from what is
    // left.
    let mut back = DataStore::new();
    {
        let full_new = input.clone().with_store(idb);
        for f in &overdeleted {
            for (rule, compiled) in prog.rules.iter().zip(&prog.compiled) {
                let Some(init) = compiled.bind_head(f) else {
                    continue;
                };
                let views = vec![&full_new; rule.body.len()];
                let mut found = false;
                run(rule, compiled, &views, Some(init), stats, &mut |_| {
                    found = true;
                    ControlFlow::Break(())
                })?;
                if found {
                    back.insert(*f);
                    break;
                }
            }
        }
    }
    stats.rederived += back.len() as u64;
    for f in back.facts() {
        idb.insert(f);
    }

    // Insert: derivations enabled by added inputs or by negated facts that
    // disappeared, then propagate everything new.
    let mut new = DataStore::new();
    {
        let full_new = input.clone().with_store(idb);
        for (rule, compiled) in prog.rules.iter().zip(&prog.compiled) {
            for (j, lit) in rule.body.iter().enumerate() {
                let mut views: Vec<&View> = vec![&full_new; rule.body.len()];
                let guard = match lit {
                    Literal::Pos(a) if dplus.count_key(a.key()) > 0 => {
                        views[j] = &dp;
                        None
                    }
                    Literal::Neg(a) if dminus.count_key(a.key()) > 0 => {
                        views.push(&dm);
                        Some(guard_rule(rule, j, true))
                    }
                    _ => continue,
                };
                let (r, c) = match &guard {
                    Some(g) => (g, &Compiled::new(g)),
                    None => (&**rule, compiled),
                };
                run(r, c, &views, None, stats, &mut |b| {
                    let f = c.head_fact(b);
                    if !idb.contains(&f) {
                        new.insert(f);
                    }
                    ControlFlow::Continue(())
                })?;
            }
        }
    }
    absorb_round(idb, &new, stats);
    let mut delta = new;
    delta.extend(back.facts());
    seminaive(prog, input, idb, delta, stats)
}
