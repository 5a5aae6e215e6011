//! The reasoner: program state, full materialization, and incremental
//! maintenance under rule and fact updates.
//!
//! Every hyper-node owns one store for its derived facts and reads a bag of
//! handles: the program's fact store plus the stores of its predecessor
//! nodes. An update first rewires the node graph, then walks an execution
//! plan of affected nodes in topological order. Each plan node either
//! recomputes from scratch, adds freshly inserted rules on top of its
//! existing facts, or runs delete/rederive driven by the exact change of
//! what it can see.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::ControlFlow;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rustc_hash::FxHashSet;

use crate::error::{Error, Result};
use crate::eval::{
    dred, extend_with_rules, materialize_node, plan_rule, JoinPlan, NodeProgram, NodeStats, View,
};
use crate::graph::{check_safety, kosaraju, Hrdg, NodeId, Rdg};
use crate::model::{Fact, Literal, RelKey, Rule, RuleId};
use crate::storage::{DataStore, DataStoreBag, Pattern, StoreArena, StoreId};

#[derive(Clone, Debug)]
struct NodeState {
    idb: StoreId,
    input: DataStoreBag,
}

/// What a plan node did during an update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeAction {
    /// Store cleared and the node evaluated from scratch.
    Recompute,
    /// Newly inserted rules evaluated on top of the existing facts.
    InsertRules,
    /// Delete/rederive driven by the change of the node's inputs.
    Incremental,
    /// Inputs unchanged; nothing evaluated.
    Skipped,
}

impl NodeAction {
    pub fn name(self) -> &'static str {
        match self {
            NodeAction::Recompute => "recompute",
            NodeAction::InsertRules => "insert-rules",
            NodeAction::Incremental => "incremental",
            NodeAction::Skipped => "skipped",
        }
    }
}

#[derive(Clone, Debug)]
pub struct NodeUpdate {
    pub action: NodeAction,
    pub input_added: usize,
    pub input_removed: usize,
    pub added: usize,
    pub removed: usize,
    pub stats: NodeStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateKind {
    InsertRules,
    DeleteRules,
    InsertFacts,
    DeleteFacts,
}

impl UpdateKind {
    pub fn name(self) -> &'static str {
        match self {
            UpdateKind::InsertRules => "insert-rules",
            UpdateKind::DeleteRules => "delete-rules",
            UpdateKind::InsertFacts => "insert-facts",
            UpdateKind::DeleteFacts => "delete-facts",
        }
    }
}

#[derive(Clone, Debug)]
pub struct UpdateReport {
    pub kind: UpdateKind,
    /// Rules inserted (with assigned ids) or deleted.
    pub rules: Vec<RuleId>,
    pub edb_added: usize,
    pub edb_removed: usize,
    /// Directly impacted nodes; for fact updates, the nodes reading a
    /// changed fact.
    pub dihn: BTreeSet<NodeId>,
    pub plan: Vec<NodeId>,
    /// Nodes that no longer exist (deleted, merged, or split).
    pub dropped: Vec<NodeId>,
    pub nodes: BTreeMap<NodeId, NodeUpdate>,
    pub elapsed: Duration,
}

impl UpdateReport {
    fn new(kind: UpdateKind) -> UpdateReport {
        UpdateReport {
            kind,
            rules: Vec::new(),
            edb_added: 0,
            edb_removed: 0,
            dihn: BTreeSet::new(),
            plan: Vec::new(),
            dropped: Vec::new(),
            nodes: BTreeMap::new(),
            elapsed: Duration::ZERO,
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.nodes.values().map(|n| n.stats.evaluations).sum()
    }

    pub fn idb_added(&self) -> usize {
        self.nodes.values().map(|n| n.added).sum()
    }

    pub fn idb_removed(&self) -> usize {
        self.nodes.values().map(|n| n.removed).sum()
    }
}

fn list<T: fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    let v: Vec<String> = items.into_iter().map(|x| x.to_string()).collect();
    format!("[{}]", v.join(" "))
}

impl fmt::Display for UpdateReport {
    /// One log line per update.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "update={}", self.kind.name())?;
        if !self.rules.is_empty() {
            write!(f, " rules={}", list(&self.rules))?;
        }
        if self.edb_added + self.edb_removed > 0 {
            write!(f, " edb=+{}/-{}", self.edb_added, self.edb_removed)?;
        }
        write!(f, " dihn={} plan={}", list(&self.dihn), list(&self.plan))?;
        if !self.dropped.is_empty() {
            write!(f, " dropped={}", list(&self.dropped))?;
        }
        for n in &self.plan {
            if let Some(u) = self.nodes.get(n) {
                write!(
                    f,
                    " {n}:{}(in=+{}/-{} idb=+{}/-{} evals={})",
                    u.action.name(),
                    u.input_added,
                    u.input_removed,
                    u.added,
                    u.removed,
                    u.stats.evaluations
                )?;
            }
        }
        write!(f, " evals={} ms={:.3}", self.evaluations(), self.elapsed.as_secs_f64() * 1e3)
    }
}

/// Outcome of a full materialization.
#[derive(Clone, Debug)]
pub struct MaterializeReport {
    pub order: Vec<NodeId>,
    pub nodes: BTreeMap<NodeId, (usize, NodeStats)>,
    pub elapsed: Duration,
}

impl MaterializeReport {
    pub fn derived(&self) -> usize {
        self.nodes.values().map(|(n, _)| n).sum()
    }
}

/// Facts added to and removed from a store.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdbDiff {
    pub added: DataStore,
    pub removed: DataStore,
}

impl IdbDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }
}

/// `added = after ∖ before`, `removed = before ∖ after`.
pub fn diff_idb(before: &DataStore, after: &DataStore) -> IdbDiff {
    IdbDiff {
        added: after.facts().filter(|f| !before.contains(f)).collect(),
        removed: before.facts().filter(|f| !after.contains(f)).collect(),
    }
}

/// Algorithm 4: depth-first post-order from each not yet visited impacted
/// node, in id order, reversed.
pub fn compute_plan(dihn: &BTreeSet<NodeId>, hrdg: &Hrdg) -> Vec<NodeId> {
    let mut visited: BTreeSet<NodeId> = BTreeSet::new();
    let mut post: Vec<NodeId> = Vec::new();
    for root in dihn {
        if visited.contains(root) || !hrdg.nodes.contains(root) {
            continue;
        }
        visited.insert(root.clone());
        let mut stack: Vec<(NodeId, Vec<NodeId>)> =
            vec![(root.clone(), hrdg.successors(root).cloned().collect())];
        while let Some((node, pending)) = stack.last_mut() {
            if pending.is_empty() {
                post.push(node.clone());
                stack.pop();
                continue;
            }
            let next = pending.remove(0);
            if visited.insert(next.clone()) {
                let succ = hrdg.successors(&next).cloned().collect();
                stack.push((next, succ));
            }
        }
    }
    post.reverse();
    post
}

/// Result of the rule-insertion impact analysis.
#[derive(Clone, Debug)]
pub struct InsertImpact {
    pub hrdg: Hrdg,
    pub dihn: BTreeSet<NodeId>,
    /// For each impacted node, the old nodes merged into it.
    pub merged_from: BTreeMap<NodeId, Vec<NodeId>>,
}

/// Result of the rule-deletion impact analysis.
#[derive(Clone, Debug)]
pub struct DeleteImpact {
    pub hrdg: Hrdg,
    pub dihn: BTreeSet<NodeId>,
    /// Old nodes that contained a deleted rule.
    pub dirty: Vec<NodeId>,
    /// Dirty nodes left with no rules.
    pub emptied: Vec<NodeId>,
    /// Each surviving dirty node and the nodes it split into.
    pub split: BTreeMap<NodeId, Vec<NodeId>>,
}

/// Algorithm 2. Each new rule becomes a provisional vertex next to the
/// existing nodes; components of that graph with more than one vertex are
/// merged, and every component containing a new rule is impacted.
pub fn identify_dihn_insert(old: &Hrdg, rdg: &Rdg, new_rules: &[RuleId]) -> Result<InsertImpact> {
    #[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
    enum Vertex {
        Node(NodeId),
        New(RuleId),
    }
    let mut vertices: Vec<Vertex> = old.nodes.iter().cloned().map(Vertex::Node).collect();
    vertices.extend(new_rules.iter().cloned().map(Vertex::New));
    let index: BTreeMap<&Vertex, usize> = vertices.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let vertex_of = |r: &RuleId| -> usize {
        match old.node_of(r) {
            Some(n) => index[&Vertex::Node(n.clone())],
            None => index[&Vertex::New(r.clone())],
        }
    };
    let mut adj = vec![Vec::new(); vertices.len()];
    for (a, b) in rdg.pos.iter().chain(&rdg.neg) {
        let (va, vb) = (vertex_of(a), vertex_of(b));
        if va != vb {
            adj[va].push(vb);
        }
    }
    let mut comps: Vec<Vec<RuleId>> = Vec::new();
    let mut dihn = BTreeSet::new();
    let mut merged_from = BTreeMap::new();
    for comp in kosaraju(&adj) {
        let mut rules = Vec::new();
        let mut constituents = Vec::new();
        let mut has_new = false;
        for &v in &comp {
            match &vertices[v] {
                Vertex::Node(n) => {
                    rules.extend(n.rules().iter().cloned());
                    constituents.push(n.clone());
                }
                Vertex::New(r) => {
                    rules.push(r.clone());
                    has_new = true;
                }
            }
        }
        let id = NodeId::new(rules.clone());
        if comp.len() > 1 || has_new {
            dihn.insert(id.clone());
            merged_from.insert(id, constituents);
        }
        rules.sort();
        comps.push(rules);
    }
    comps.sort();
    check_safety(rdg, &comps)?;
    Ok(InsertImpact {
        hrdg: Hrdg::from_components(rdg, comps),
        dihn,
        merged_from,
    })
}

/// Algorithm 3. Nodes holding a deleted rule are dirty; their successors
/// are impacted. A dirty node left empty disappears; otherwise it is split
/// into the components of its remaining rules, each impacted.
pub fn identify_dihn_delete(old: &Hrdg, rdg: &Rdg, deleted: &[RuleId]) -> Result<DeleteImpact> {
    for r in deleted {
        if old.node_of(r).is_none() {
            return Err(Error::UnknownRule(r.clone()));
        }
    }
    let dirty: BTreeSet<NodeId> = deleted.iter().map(|r| old.rule_node[r].clone()).collect();
    let mut dihn = BTreeSet::new();
    for n in &dirty {
        for s in old.successors(n) {
            if !dirty.contains(s) {
                dihn.insert(s.clone());
            }
        }
    }
    let mut comps: Vec<Vec<RuleId>> = old
        .nodes
        .iter()
        .filter(|n| !dirty.contains(*n))
        .map(|n| n.rules().to_vec())
        .collect();
    let mut emptied = Vec::new();
    let mut split = BTreeMap::new();
    for n in &dirty {
        let remaining: Vec<Arc<Rule>> = n
            .rules()
            .iter()
            .filter(|r| !deleted.contains(r))
            .map(|r| rdg.rules[r].clone())
            .collect();
        if remaining.is_empty() {
            emptied.push(n.clone());
            continue;
        }
        let parts = Rdg::build(&remaining).scc();
        let ids: Vec<NodeId> = parts.iter().map(|p| NodeId::new(p.clone())).collect();
        dihn.extend(ids.iter().cloned());
        split.insert(n.clone(), ids);
        comps.extend(parts);
    }
    comps.sort();
    check_safety(rdg, &comps)?;
    Ok(DeleteImpact {
        hrdg: Hrdg::from_components(rdg, comps),
        dihn,
        dirty: dirty.into_iter().collect(),
        emptied,
        split,
    })
}

/// Per-plan-node instruction for an update.
#[derive(Clone, Debug)]
enum Work {
    Recompute,
    InsertRules {
        new_rules: Vec<RuleId>,
        old_stores: Vec<StoreId>,
    },
    Incremental,
}

#[derive(Clone, Debug)]
pub struct Engine {
    rules: BTreeMap<RuleId, Arc<Rule>>,
    arena: StoreArena,
    edb: StoreId,
    rdg: Rdg,
    hrdg: Hrdg,
    nodes: BTreeMap<NodeId, NodeState>,
    program_idb: DataStoreBag,
    materialized: bool,
    counters: BTreeMap<NodeId, NodeStats>,
}

impl Default for Engine {
    fn default() -> Self {
        Engine::new()
    }
}

impl Engine {
    pub fn new() -> Engine {
        let mut arena = StoreArena::new();
        let edb = arena.create();
        Engine {
            rules: BTreeMap::new(),
            arena,
            edb,
            rdg: Rdg::default(),
            hrdg: Hrdg::default(),
            nodes: BTreeMap::new(),
            program_idb: DataStoreBag::new(),
            materialized: false,
            counters: BTreeMap::new(),
        }
    }

    /// Engine over `rules` and `facts`, materialized.
    pub fn with_program(rules: Vec<Rule>, facts: impl IntoIterator<Item = Fact>) -> Result<Engine> {
        let mut e = Engine::new();
        e.insert_rules(rules)?;
        e.insert_facts(facts)?;
        e.materialize()?;
        Ok(e)
    }

    pub fn rules(&self) -> impl Iterator<Item = &Arc<Rule>> {
        self.rules.values()
    }

    pub fn rule(&self, id: &RuleId) -> Option<&Arc<Rule>> {
        self.rules.get(id)
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    pub fn rdg(&self) -> &Rdg {
        &self.rdg
    }

    pub fn hrdg(&self) -> &Hrdg {
        &self.hrdg
    }

    pub fn is_materialized(&self) -> bool {
        self.materialized
    }

    pub fn arena(&self) -> &StoreArena {
        &self.arena
    }

    pub fn edb(&self) -> &DataStore {
        self.arena.get(self.edb)
    }

    pub fn edb_id(&self) -> StoreId {
        self.edb
    }

    pub fn program_idb(&self) -> &DataStoreBag {
        &self.program_idb
    }

    pub fn node_store(&self, node: &NodeId) -> Option<&DataStore> {
        self.nodes.get(node).map(|s| self.arena.get(s.idb))
    }

    pub fn node_store_id(&self, node: &NodeId) -> Option<StoreId> {
        self.nodes.get(node).map(|s| s.idb)
    }

    /// Handles in a node's input bag.
    pub fn node_input_stores(&self, node: &NodeId) -> Option<&[StoreId]> {
        self.nodes.get(node).map(|s| s.input.stores())
    }

    /// Cumulative per-node instrumentation since the last materialization
    /// or [`Engine::reset_counters`].
    pub fn counters(&self) -> &BTreeMap<NodeId, NodeStats> {
        &self.counters
    }

    pub fn reset_counters(&mut self) {
        for s in self.counters.values_mut() {
            *s = NodeStats::default();
        }
    }

    /// Derived facts per node.
    pub fn node_idbs(&self) -> BTreeMap<NodeId, FxHashSet<Fact>> {
        self.nodes
            .iter()
            .map(|(n, s)| (n.clone(), self.arena.get(s.idb).facts().collect()))
            .collect()
    }

    /// All derived facts.
    pub fn idb_facts(&self) -> FxHashSet<Fact> {
        self.program_idb.facts(&self.arena)
    }

    pub fn idb_len(&self) -> usize {
        self.idb_facts().len()
    }

    /// Matches over explicit and derived facts.
    pub fn query(&self, pat: &Pattern) -> Vec<Fact> {
        View::of_store(self.edb())
            .with_bag(&self.program_idb, &self.arena)
            .matches(pat)
    }

    /// Every explicit or derived fact.
    pub fn all_facts(&self) -> FxHashSet<Fact> {
        let mut all = self.idb_facts();
        all.extend(self.edb().facts());
        all
    }

    /// A fresh engine over the same rules and facts, materialized from
    /// scratch.
    pub fn rematerialized(&self) -> Result<Engine> {
        let mut e = Engine::new();
        e.insert_rules(self.rules.values().map(|r| (**r).clone()).collect())?;
        e.insert_facts(self.edb().facts().collect::<Vec<_>>())?;
        e.materialize()?;
        Ok(e)
    }

    /// Facts present in `self` but not in `other`, and the reverse.
    pub fn idb_mismatch(&self, other: &Engine) -> (Vec<Fact>, Vec<Fact>) {
        let a = self.idb_facts();
        let b = other.idb_facts();
        (
            a.difference(&b).copied().collect(),
            b.difference(&a).copied().collect(),
        )
    }

    /// Per-node equality of derived facts and identical node structure.
    pub fn same_idb(&self, other: &Engine) -> bool {
        self.node_idbs() == other.node_idbs()
    }

    /// Join plans for every rule against current statistics.
    pub fn explain(&self) -> Result<Vec<(JoinPlan, Arc<Rule>)>> {
        let view = View::of_store(self.edb()).with_bag(&self.program_idb, &self.arena);
        self.rules
            .values()
            .map(|r| {
                let plan = plan_rule(
                    r,
                    |i| match &r.body[i] {
                        Literal::Pos(a) | Literal::Neg(a) => view.count_key(a.key()),
                        _ => 0,
                    },
                    &[],
                )?;
                Ok((plan, r.clone()))
            })
            .collect()
    }

    fn next_rule_id(&self, taken: &BTreeSet<RuleId>) -> RuleId {
        (1..)
            .map(|i| RuleId::new(&format!("r{i}")))
            .find(|id| !self.rules.contains_key(id) && !taken.contains(id))
            .expect("unbounded")
    }

    /// Assigns ids, rejects duplicates, validates and checks aggregate head
    /// uniqueness against the combined rule set.
    fn register(&self, rules: Vec<Rule>) -> Result<(BTreeMap<RuleId, Arc<Rule>>, Vec<RuleId>)> {
        let mut all = self.rules.clone();
        let mut ids = Vec::new();
        let mut batch: BTreeSet<RuleId> = rules.iter().map(|r| r.id.clone()).collect();
        for mut rule in rules {
            if rule.id.is_empty() {
                rule.id = self.next_rule_id(&batch);
                batch.insert(rule.id.clone());
            }
            if all.contains_key(&rule.id) {
                return Err(Error::DuplicateRule(rule.id));
            }
            rule.validate()?;
            ids.push(rule.id.clone());
            all.insert(rule.id.clone(), Arc::new(rule));
        }
        for agg in all.values().filter(|r| r.is_aggregate()) {
            let key = agg.head.key();
            if let Some(other) = all
                .values()
                .find(|r| r.id != agg.id && r.head.key().overlaps(&key))
            {
                return Err(Error::Aggregate {
                    rule: agg.id.to_string(),
                    message: format!(
                        "head predicate of an aggregate rule is also defined by {}",
                        other.id
                    ),
                });
            }
        }
        Ok((all, ids))
    }

    fn program_for(&self, node: &NodeId, only: Option<&[RuleId]>) -> NodeProgram {
        NodeProgram::new(
            node.rules()
                .iter()
                .filter(|r| only.is_none_or(|keep| keep.contains(r)))
                .map(|r| self.rules[r].clone())
                .collect(),
        )
    }

    fn input_bag(&self, node: &NodeId) -> DataStoreBag {
        let mut bag = DataStoreBag::new();
        bag.add_store(&self.arena, self.edb);
        for (pred, _) in self.hrdg.predecessors(node) {
            bag.add_store(&self.arena, self.nodes[pred].idb);
        }
        bag
    }

    fn rebuild_bags(&mut self) {
        let ids: Vec<NodeId> = self.nodes.keys().cloned().collect();
        for n in &ids {
            let bag = self.input_bag(n);
            self.nodes.get_mut(n).unwrap().input = bag;
        }
        let mut idb = DataStoreBag::new();
        for s in self.nodes.values() {
            idb.add_store(&self.arena, s.idb);
        }
        self.program_idb = idb;
    }

    /// Full evaluation: every node in topological order, from empty stores.
    pub fn materialize(&mut self) -> Result<MaterializeReport> {
        self.materialize_with(None)
    }

    /// Full evaluation visiting nodes in `order`, which must be a
    /// topological order of the current node graph.
    ///
    /// # Panics
    /// If `order` is not a topological order of the program's nodes.
    pub fn materialize_in_order(&mut self, order: &[NodeId]) -> Result<MaterializeReport> {
        self.materialize_with(Some(order))
    }

    fn materialize_with(&mut self, order: Option<&[NodeId]>) -> Result<MaterializeReport> {
        let snapshot = self.clone();
        let result = self.materialize_inner(order);
        if result.is_err() {
            *self = snapshot;
        }
        result
    }

    fn materialize_inner(&mut self, order: Option<&[NodeId]>) -> Result<MaterializeReport> {
        let start = Instant::now();
        let rules: Vec<Arc<Rule>> = self.rules.values().cloned().collect();
        self.rdg = Rdg::build(&rules);
        self.hrdg = Hrdg::build(&self.rdg)?;
        for s in std::mem::take(&mut self.nodes).into_values() {
            self.arena.remove(s.idb);
        }
        self.program_idb = DataStoreBag::new();
        self.counters.clear();
        let order = match order {
            Some(o) => {
                assert!(self.hrdg.is_topological(o), "not a topological order of the program");
                o.to_vec()
            }
            None => self.hrdg.topological_order(),
        };
        let mut report = MaterializeReport {
            order: order.clone(),
            nodes: BTreeMap::new(),
            elapsed: Duration::ZERO,
        };
        for node in &order {
            let idb = self.arena.create();
            self.nodes.insert(
                node.clone(),
                NodeState {
                    idb,
                    input: DataStoreBag::new(),
                },
            );
            let input = self.input_bag(node);
            let prog = self.program_for(node, None);
            let mut stats = NodeStats::default();
            let mut store = self.arena.take(idb);
            let res = materialize_node(&prog, &View::of_bag(&input, &self.arena), &mut store, &mut stats);
            let len = store.len();
            self.arena.put(idb, store);
            res?;
            self.nodes.get_mut(node).unwrap().input = input;
            self.program_idb.add_store(&self.arena, idb);
            report.nodes.insert(node.clone(), (len, stats.clone()));
            self.counters.insert(node.clone(), stats);
        }
        self.materialized = true;
        report.elapsed = start.elapsed();
        Ok(report)
    }

    fn transact(
        &mut self,
        f: impl FnOnce(&mut Engine, &Engine) -> Result<UpdateReport>,
    ) -> Result<UpdateReport> {
        let start = Instant::now();
        let snapshot = self.clone();
        match f(self, &snapshot) {
            Ok(mut r) => {
                r.elapsed = start.elapsed();
                Ok(r)
            }
            Err(e) => {
                *self = snapshot;
                Err(e)
            }
        }
    }

    /// Registers rules; when materialized, maintains the derived facts
    /// incrementally. The whole batch is rejected if any rule is invalid or
    /// makes the program unsafe.
    pub fn insert_rules(&mut self, rules: Vec<Rule>) -> Result<UpdateReport> {
        self.transact(|e, old| e.insert_rules_inner(rules, old))
    }

    pub fn insert_rule(&mut self, rule: Rule) -> Result<UpdateReport> {
        self.insert_rules(vec![rule])
    }

    fn insert_rules_inner(&mut self, rules: Vec<Rule>, old: &Engine) -> Result<UpdateReport> {
        let mut report = UpdateReport::new(UpdateKind::InsertRules);
        let (all, new_ids) = self.register(rules)?;
        report.rules = new_ids.clone();
        let rdg = Rdg::build(all.values());
        let impact = identify_dihn_insert(&self.hrdg, &rdg, &new_ids)?;
        self.rules = all;
        self.rdg = rdg;
        if !self.materialized {
            self.hrdg = impact.hrdg;
            return Ok(report);
        }
        let mut work = BTreeMap::new();
        let mut cand_rem = DataStore::new();
        for (node, constituents) in &impact.merged_from {
            let mut merged = DataStore::new();
            let mut old_stores = Vec::new();
            for c in constituents {
                let st = self.nodes.remove(c).expect("constituent exists");
                self.counters.remove(c);
                let ds = self.arena.remove(st.idb).expect("store exists");
                cand_rem.extend(ds.facts());
                merged.extend(ds.facts());
                old_stores.push(st.idb);
                report.dropped.push(c.clone());
            }
            let idb = self.arena.insert(merged);
            self.nodes.insert(
                node.clone(),
                NodeState {
                    idb,
                    input: DataStoreBag::new(),
                },
            );
            let new_rules: Vec<RuleId> =
                node.rules().iter().filter(|r| new_ids.contains(r)).cloned().collect();
            work.insert(
                node.clone(),
                Work::InsertRules {
                    new_rules,
                    old_stores,
                },
            );
        }
        self.hrdg = impact.hrdg;
        self.rebuild_bags();
        report.dihn = impact.dihn;
        report.plan = compute_plan(&report.dihn, &self.hrdg);
        self.run_plan(&mut report, work, DataStore::new(), cand_rem, old)?;
        Ok(report)
    }

    /// Removes rules; when materialized, maintains the derived facts.
    pub fn delete_rules(&mut self, ids: &[RuleId]) -> Result<UpdateReport> {
        self.transact(|e, old| e.delete_rules_inner(ids, old))
    }

    pub fn delete_rule(&mut self, id: &RuleId) -> Result<UpdateReport> {
        self.delete_rules(std::slice::from_ref(id))
    }

    fn delete_rules_inner(&mut self, ids: &[RuleId], old: &Engine) -> Result<UpdateReport> {
        let mut report = UpdateReport::new(UpdateKind::DeleteRules);
        report.rules = ids.to_vec();
        for id in ids {
            if !self.rules.contains_key(id) {
                return Err(Error::UnknownRule(id.clone()));
            }
        }
        let mut all = self.rules.clone();
        for id in ids {
            all.remove(id);
        }
        let rdg = Rdg::build(all.values());
        let impact = if self.materialized {
            identify_dihn_delete(&self.hrdg, &rdg, ids)?
        } else {
            let hrdg = Hrdg::build(&rdg)?;
            self.rules = all;
            self.rdg = rdg;
            self.hrdg = hrdg;
            return Ok(report);
        };
        self.rules = all;
        self.rdg = rdg;
        let mut cand_rem = DataStore::new();
        let mut work = BTreeMap::new();
        for n in &impact.dirty {
            let st = self.nodes.remove(n).expect("dirty node exists");
            self.counters.remove(n);
            let ds = self.arena.remove(st.idb).expect("store exists");
            cand_rem.extend(ds.facts());
            report.dropped.push(n.clone());
        }
        for parts in impact.split.values() {
            for p in parts {
                let idb = self.arena.create();
                self.nodes.insert(
                    p.clone(),
                    NodeState {
                        idb,
                        input: DataStoreBag::new(),
                    },
                );
            }
        }
        for n in &impact.dihn {
            work.insert(n.clone(), Work::Recompute);
        }
        self.hrdg = impact.hrdg;
        self.rebuild_bags();
        report.dihn = impact.dihn;
        report.plan = compute_plan(&report.dihn, &self.hrdg);
        self.run_plan(&mut report, work, DataStore::new(), cand_rem, old)?;
        Ok(report)
    }

    /// Adds explicit facts, maintaining derived facts when materialized.
    pub fn insert_facts(&mut self, facts: impl IntoIterator<Item = Fact>) -> Result<UpdateReport> {
        let facts: Vec<Fact> = facts.into_iter().collect();
        self.transact(|e, old| e.fact_update(facts, true, old))
    }

    /// Removes explicit facts; absent facts are ignored.
    pub fn delete_facts(&mut self, facts: impl IntoIterator<Item = Fact>) -> Result<UpdateReport> {
        let facts: Vec<Fact> = facts.into_iter().collect();
        self.transact(|e, old| e.fact_update(facts, false, old))
    }

    fn fact_update(&mut self, facts: Vec<Fact>, insert: bool, old: &Engine) -> Result<UpdateReport> {
        let kind = if insert {
            UpdateKind::InsertFacts
        } else {
            UpdateKind::DeleteFacts
        };
        let mut report = UpdateReport::new(kind);
        let mut changed = DataStore::new();
        {
            let edb = self.arena.get_mut(self.edb);
            for f in facts {
                let did = if insert { edb.insert(f) } else { edb.delete(&f) };
                if did {
                    changed.insert(f);
                }
            }
        }
        if insert {
            report.edb_added = changed.len();
        } else {
            report.edb_removed = changed.len();
        }
        for s in self.nodes.values_mut() {
            s.input.refresh_index(&self.arena);
        }
        if !self.materialized || changed.is_empty() {
            return Ok(report);
        }
        for node in &self.hrdg.nodes {
            let reads = node.rules().iter().any(|r| {
                self.rules[r]
                    .body_keys()
                    .any(|k| changed.scan(&key_pattern(k), &mut |_| ControlFlow::Break(())).is_break())
            });
            if reads {
                report.dihn.insert(node.clone());
            }
        }
        report.plan = compute_plan(&report.dihn, &self.hrdg);
        let (add, rem) = if insert {
            (changed, DataStore::new())
        } else {
            (DataStore::new(), changed)
        };
        self.run_plan(&mut report, BTreeMap::new(), add, rem, old)?;
        Ok(report)
    }

    /// Whether `f` is visible to `node` now: explicit, or derived by some
    /// other node.
    fn visible_now(&self, f: &Fact, own: StoreId) -> bool {
        self.edb().contains(f)
            || self
                .program_idb
                .stores_for(f.p)
                .iter()
                .any(|&id| id != own && self.arena.get(id).contains(f))
    }

    /// Exact input change of `node`: candidates are the facts that changed
    /// in some store; a candidate counts if its visibility flipped.
    fn input_diff(
        &self,
        node: &NodeId,
        own_now: StoreId,
        own_before: &[StoreId],
        cand_add: &DataStore,
        cand_rem: &DataStore,
        old: &Engine,
    ) -> (DataStore, DataStore) {
        let mut candidates: FxHashSet<Fact> = FxHashSet::default();
        let keys: Vec<RelKey> = node
            .rules()
            .iter()
            .flat_map(|r| self.rules[r].body_keys().collect::<Vec<_>>())
            .collect();
        for k in &keys {
            let pat = key_pattern(*k);
            for cand in [cand_add, cand_rem] {
                let _ = cand.scan::<()>(&pat, &mut |f| {
                    candidates.insert(f);
                    ControlFlow::Continue(())
                });
            }
        }
        let visible_before = |f: &Fact| {
            old.edb().contains(f)
                || old
                    .program_idb
                    .stores_for(f.p)
                    .iter()
                    .any(|id| !own_before.contains(id) && old.arena.get(*id).contains(f))
        };
        let mut plus = DataStore::new();
        let mut minus = DataStore::new();
        for f in candidates {
            match (visible_before(&f), self.visible_now(&f, own_now)) {
                (false, true) => {
                    plus.insert(f);
                }
                (true, false) => {
                    minus.insert(f);
                }
                _ => {}
            }
        }
        (plus, minus)
    }

    fn run_plan(
        &mut self,
        report: &mut UpdateReport,
        mut work: BTreeMap<NodeId, Work>,
        mut cand_add: DataStore,
        mut cand_rem: DataStore,
        old: &Engine,
    ) -> Result<()> {
        for node in report.plan.clone() {
            let job = work.remove(&node).unwrap_or(Work::Incremental);
            let state = self.nodes[&node].clone();
            let own = state.idb;
            let mut input_bag = state.input;
            input_bag.refresh_index(&self.arena);
            let mut stats = NodeStats::default();
            let (in_add, in_rem, action) = match &job {
                Work::Recompute => (0, 0, NodeAction::Recompute),
                Work::InsertRules { old_stores, .. } => {
                    let (p, m) = self.input_diff(&node, own, old_stores, &cand_add, &cand_rem, old);
                    let sizes = (p.len(), m.len());
                    let mut store = self.arena.take(own);
                    let res = self.insert_rules_at(&node, &job, &input_bag, &p, &m, &mut store, &mut stats);
                    self.arena.put(own, store);
                    res?;
                    (sizes.0, sizes.1, NodeAction::InsertRules)
                }
                Work::Incremental => {
                    let (p, m) = self.input_diff(&node, own, &[own], &cand_add, &cand_rem, old);
                    let sizes = (p.len(), m.len());
                    if p.is_empty() && m.is_empty() {
                        (0, 0, NodeAction::Skipped)
                    } else {
                        let prog = self.program_for(&node, None);
                        if prog.is_aggregate() {
                            (sizes.0, sizes.1, NodeAction::Recompute)
                        } else {
                            let mut store = self.arena.take(own);
                            let res = dred(
                                &prog,
                                &View::of_bag(&input_bag, &self.arena),
                                &p,
                                &m,
                                &mut store,
                                &mut stats,
                            );
                            self.arena.put(own, store);
                            res?;
                            (sizes.0, sizes.1, NodeAction::Incremental)
                        }
                    }
                }
            };
            if action == NodeAction::Recompute {
                let prog = self.program_for(&node, None);
                let mut store = DataStore::new();
                let res = materialize_node(
                    &prog,
                    &View::of_bag(&input_bag, &self.arena),
                    &mut store,
                    &mut stats,
                );
                res?;
                self.arena.put(own, store);
            }
            let empty = DataStore::new();
            let before = old.arena.try_get(own).unwrap_or(&empty);
            let diff = diff_idb(before, self.arena.get(own));
            cand_add.extend(diff.added.facts());
            cand_rem.extend(diff.removed.facts());
            self.program_idb.refresh_index(&self.arena);
            self.nodes.get_mut(&node).unwrap().input = input_bag;
            self.counters.entry(node.clone()).or_default().absorb(&stats);
            report.nodes.insert(
                node,
                NodeUpdate {
                    action,
                    input_added: in_add,
                    input_removed: in_rem,
                    added: diff.added.len(),
                    removed: diff.removed.len(),
                    stats,
                },
            );
        }
        for s in self.nodes.values_mut() {
            s.input.refresh_index(&self.arena);
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn insert_rules_at(
        &self,
        node: &NodeId,
        job: &Work,
        input_bag: &DataStoreBag,
        plus: &DataStore,
        minus: &DataStore,
        store: &mut DataStore,
        stats: &mut NodeStats,
    ) -> Result<()> {
        let Work::InsertRules { new_rules, .. } = job else {
            unreachable!()
        };
        let input = View::of_bag(input_bag, &self.arena);
        let old_rules: Vec<RuleId> = node
            .rules()
            .iter()
            .filter(|r| !new_rules.contains(r))
            .cloned()
            .collect();
        if !old_rules.is_empty() && !(plus.is_empty() && minus.is_empty()) {
            let prog = self.program_for(node, Some(&old_rules));
            if prog.is_aggregate() {
                *store = DataStore::new();
                materialize_node(&prog, &input, store, stats)?;
            } else {
                dred(&prog, &input, plus, minus, store, stats)?;
            }
        }
        let prog = self.program_for(node, None);
        extend_with_rules(&prog, new_rules, &input, store, stats)
    }
}

fn key_pattern(k: RelKey) -> Pattern {
    Pattern::new(k.pred, None, k.class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_facts, parse_rule, parse_rules};

    const RUNNING: &str = "\
r1: a(X, Y) :- e(X, Y).
r2: b(X, Y) :- d(Y, X).
r3: c(X, Y) :- b(X, Y).
r4: d(X, Z) :- c(X, Y) ∧ a(Y, Z).
r5: f(X, Y) :- e(X, Y) ∧ not c(X, Y).
r6: g(X, Y) :- b(X, Z) ∧ h(Z, Y).
r7: h(X, Y) :- f(X, Y) ∧ g(Y, X).
";

    fn node(ids: &[&str]) -> NodeId {
        NodeId::from(ids)
    }

    fn engine(rules: &str, facts: &str) -> Engine {
        Engine::with_program(parse_rules(rules).unwrap(), parse_facts(facts).unwrap()).unwrap()
    }

    fn assert_oracle(e: &Engine) {
        let fresh = e.rematerialized().unwrap();
        let (extra, missing) = e.idb_mismatch(&fresh);
        assert!(extra.is_empty() && missing.is_empty(), "extra {extra:?} missing {missing:?}");
        assert!(e.same_idb(&fresh));
    }

    #[test]
    fn plan_is_dfs_postorder_reversed() {
        let e = engine(RUNNING, "e(x, y).");
        let plan = compute_plan(&[node(&["r2", "r3", "r4"])].into_iter().collect(), e.hrdg());
        assert_eq!(plan, vec![node(&["r2", "r3", "r4"]), node(&["r5"]), node(&["r6", "r7"])]);
        let leaf = compute_plan(&[node(&["r6", "r7"])].into_iter().collect(), e.hrdg());
        assert_eq!(leaf, vec![node(&["r6", "r7"])]);
    }

    #[test]
    fn insertion_merges_into_existing_node() {
        let mut e = engine(RUNNING, "e(a, b).\nd(b, a).");
        let r8 = parse_rule("r8: b(X, Z) :- c(X, Y) and b(Y, Z).").unwrap();
        let report = e.insert_rule(r8).unwrap();
        let merged = node(&["r2", "r3", "r4", "r8"]);
        assert_eq!(report.dihn, [merged.clone()].into_iter().collect());
        assert_eq!(report.dropped, vec![node(&["r2", "r3", "r4"])]);
        assert_eq!(report.nodes[&merged].action, NodeAction::InsertRules);
        assert_oracle(&e);
    }

    #[test]
    fn deleting_r4_splits_its_node() {
        let mut e = engine(RUNNING, "e(a, b).\nd(b, a).\nd(a, a).");
        let report = e.delete_rule(&RuleId::new("r4")).unwrap();
        let expect: BTreeSet<NodeId> = [node(&["r2"]), node(&["r3"]), node(&["r5"]), node(&["r6", "r7"])]
            .into_iter()
            .collect();
        assert_eq!(report.dihn, expect);
        assert_eq!(report.dropped, vec![node(&["r2", "r3", "r4"])]);
        assert_oracle(&e);
    }

    #[test]
    fn unsafe_insertion_rolls_back() {
        let mut e = engine(RUNNING, "e(a, b).\nd(b, a).");
        let before = e.node_idbs();
        let bad = parse_rule("r9: e2(X, Y) :- f(X, Y).").unwrap();
        e.insert_rule(bad).unwrap();
        let cyc = parse_rule("r10: d(X, Y) :- f(X, Y).").unwrap();
        let err = e.insert_rule(cyc).unwrap_err();
        assert!(matches!(err, Error::UnsafeProgram { .. }), "{err:?}");
        assert!(e.rule(&RuleId::new("r10")).is_none());
        let mut fresh = e.node_idbs();
        fresh.remove(&node(&["r9"]));
        assert_eq!(fresh, before);
        assert_oracle(&e);
    }

    #[test]
    fn duplicate_and_unknown_ids() {
        let mut e = engine(RUNNING, "e(a, b).");
        let dup = parse_rule("r1: z(X, Y) :- e(X, Y).").unwrap();
        assert!(matches!(e.insert_rule(dup), Err(Error::DuplicateRule(_))));
        assert!(matches!(e.delete_rule(&RuleId::new("nope")), Err(Error::UnknownRule(_))));
    }

    #[test]
    fn unlabelled_rules_get_free_ids() {
        let mut e = Engine::new();
        e.insert_rules(parse_rules("r1: p(X, Y) :- q(X, Y).\nt(X, Y) :- p(X, Y).\nu(X, Y) :- t(X, Y).").unwrap())
            .unwrap();
        let ids: Vec<&str> = e.rules().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["r1", "r2", "r3"]);
    }

    #[test]
    fn aggregate_head_must_be_unique() {
        let mut e = Engine::new();
        let rules = parse_rules(
            "r1: c(X, N) :- AGGREGATE(e(X, Y)) ON X WITH COUNT(Y) AS N.\nr2: c(X, Y) :- f(X, Y).",
        )
        .unwrap();
        assert!(matches!(e.insert_rules(rules), Err(Error::Aggregate { .. })));
        assert_eq!(e.rule_count(), 0);
    }

    #[test]
    fn fact_updates_follow_negation() {
        let mut e = engine(
            "r15: p25(X, Z) :- p11(X, Y) ∧ p12(Y, Z) ∧ not p5(Y, Z).",
            "p11(a, b).\np12(b, c).",
        );
        assert_eq!(e.idb_len(), 1);
        e.insert_facts([Fact::iri("p5", "b", "c")]).unwrap();
        assert_eq!(e.idb_len(), 0);
        assert_oracle(&e);
        e.delete_facts([Fact::iri("p5", "b", "c")]).unwrap();
        assert_eq!(e.idb_len(), 1);
        assert_oracle(&e);
    }

    #[test]
    fn unrelated_fact_evaluates_nothing() {
        let mut e = engine(RUNNING, "e(a, b).");
        let r = e.insert_facts([Fact::iri("zzz", "a", "b")]).unwrap();
        assert!(r.plan.is_empty());
        assert_eq!(r.evaluations(), 0);
    }

    #[test]
    fn insert_then_delete_restores() {
        let mut e = engine(RUNNING, "e(a, b).\nd(b, a).\ne(b, c).\nh(a, c).");
        let before = e.node_idbs();
        let r = parse_rule("r8: b(X, Z) :- c(X, Y) and b(Y, Z).").unwrap();
        e.insert_rule(r).unwrap();
        assert_oracle(&e);
        e.delete_rule(&RuleId::new("r8")).unwrap();
        assert_eq!(e.node_idbs(), before);
    }

    #[test]
    fn deleting_the_only_rule_of_a_leaf_is_free() {
        let mut e = engine(RUNNING, "e(a, b).\nd(b, a).");
        let extra = parse_rule("r9: z(X, Y) :- h(X, Y).").unwrap();
        e.insert_rule(extra).unwrap();
        let r = e.delete_rule(&RuleId::new("r9")).unwrap();
        assert!(r.dihn.is_empty() && r.plan.is_empty());
        assert_eq!(r.evaluations(), 0);
        assert_oracle(&e);
    }

    #[test]
    fn diff_idb_set_algebra() {
        let a: DataStore = [Fact::iri("p", "a", "b"), Fact::iri("p", "b", "c")].into_iter().collect();
        let b: DataStore = [Fact::iri("p", "b", "c"), Fact::iri("p", "c", "d")].into_iter().collect();
        let d = diff_idb(&a, &b);
        assert_eq!(d.added.facts().collect::<Vec<_>>(), vec![Fact::iri("p", "c", "d")]);
        assert_eq!(d.removed.facts().collect::<Vec<_>>(), vec![Fact::iri("p", "a", "b")]);
        assert!(diff_idb(&a, &a).is_empty());
    }
}
