//! Rule dependency graph, its condensation into hyper-nodes, safety and
//! ordering.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::model::{RelKey, Rule, RuleId};

/// Rules as vertices; `pos`/`neg` edges run from the rule defining a
/// predicate to the rules reading it positively/negatively.
#[derive(Clone, Debug, Default)]
pub struct Rdg {
    pub rules: BTreeMap<RuleId, Arc<Rule>>,
    pub pos: BTreeSet<(RuleId, RuleId)>,
    pub neg: BTreeSet<(RuleId, RuleId)>,
}

impl Rdg {
    pub fn build<'a>(rules: impl IntoIterator<Item = &'a Arc<Rule>>) -> Rdg {
        let rules: BTreeMap<RuleId, Arc<Rule>> =
            rules.into_iter().map(|r| (r.id.clone(), r.clone())).collect();
        // Head index: predicate -> (key, rule).
        let mut heads: FxHashMap<_, Vec<(RelKey, &RuleId)>> = FxHashMap::default();
        for (id, r) in &rules {
            let key = r.head.key();
            heads.entry(key.pred).or_default().push((key, id));
        }
        let mut rdg = Rdg::default();
        for (reader, r) in &rules {
            let readers = r
                .positive_body()
                .map(|a| (a.key(), true))
                .chain(r.negative_body().map(|a| (a.key(), false)));
            for (key, positive) in readers {
                for (head_key, writer) in heads.get(&key.pred).into_iter().flatten() {
                    if head_key.overlaps(&key) {
                        let edge = ((*writer).clone(), reader.clone());
                        if positive {
                            rdg.pos.insert(edge);
                        } else {
                            rdg.neg.insert(edge);
                        }
                    }
                }
            }
        }
        rdg.rules = rules;
        rdg
    }

    pub fn successors(&self) -> BTreeMap<&RuleId, BTreeSet<&RuleId>> {
        let mut out: BTreeMap<&RuleId, BTreeSet<&RuleId>> =
            self.rules.keys().map(|k| (k, BTreeSet::new())).collect();
        for (a, b) in self.pos.iter().chain(&self.neg) {
            out.entry(a).or_default().insert(b);
        }
        out
    }

    /// Strongly connected components over `pos ∪ neg`, each sorted, listed by
    /// smallest member.
    pub fn scc(&self) -> Vec<Vec<RuleId>> {
        let ids: Vec<&RuleId> = self.rules.keys().collect();
        let index: FxHashMap<&RuleId, usize> =
            ids.iter().enumerate().map(|(i, r)| (*r, i)).collect();
        let mut adj = vec![Vec::new(); ids.len()];
        for (a, b) in self.pos.iter().chain(&self.neg) {
            adj[index[a]].push(index[b]);
        }
        let mut comps: Vec<Vec<RuleId>> = kosaraju(&adj)
            .into_iter()
            .map(|c| {
                let mut v: Vec<RuleId> = c.into_iter().map(|i| ids[i].clone()).collect();
                v.sort();
                v
            })
            .collect();
        comps.sort();
        comps
    }

    /// Strata: the least labelling with `f(a) <= f(b)` on positive and
    /// `f(a) < f(b)` on negative edges.
    pub fn stratify(&self) -> Result<BTreeMap<RuleId, usize>> {
        let hrdg = Hrdg::build(self)?;
        let mut level: BTreeMap<NodeId, usize> = BTreeMap::new();
        for n in hrdg.topological_order() {
            let l = hrdg
                .predecessors(&n)
                .map(|(p, negative)| level[p] + usize::from(negative))
                .max()
                .unwrap_or(0);
            level.insert(n, l);
        }
        Ok(hrdg
            .rule_node
            .iter()
            .map(|(r, n)| (r.clone(), level[n]))
            .collect())
    }

    /// Graph-description text with dashed negative edges.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph rdg {\n");
        for id in self.rules.keys() {
            out.push_str(&format!("  \"{id}\";\n"));
        }
        for (a, b) in &self.pos {
            out.push_str(&format!("  \"{a}\" -> \"{b}\";\n"));
        }
        for (a, b) in &self.neg {
            out.push_str(&format!("  \"{a}\" -> \"{b}\" [style=dashed];\n"));
        }
        out.push_str("}\n");
        out
    }
}

/// Kosaraju's two-pass algorithm, iterative.
pub(crate) fn kosaraju(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut radj = vec![Vec::new(); n];
    for (a, outs) in adj.iter().enumerate() {
        for &b in outs {
            radj[b].push(a);
        }
    }
    let mut seen = vec![false; n];
    let mut finish = Vec::with_capacity(n);
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![(start, 0usize)];
        while let Some((v, next)) = stack.last_mut() {
            if let Some(&w) = adj[*v].get(*next) {
                *next += 1;
                if !seen[w] {
                    seen[w] = true;
                    stack.push((w, 0));
                }
            } else {
                finish.push(*v);
                stack.pop();
            }
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut comps = Vec::new();
    for &root in finish.iter().rev() {
        if comp[root] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = vec![root];
        comp[root] = id;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &w in &radj[v] {
                if comp[w] == usize::MAX {
                    comp[w] = id;
                    members.push(w);
                    stack.push(w);
                }
            }
        }
        comps.push(members);
    }
    comps
}

/// A hyper-node's identity: its sorted member rule ids.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(Arc<[RuleId]>);

impl NodeId {
    pub fn new(mut rules: Vec<RuleId>) -> NodeId {
        rules.sort();
        rules.dedup();
        NodeId(rules.into())
    }

    pub fn rules(&self) -> &[RuleId] {
        &self.0
    }

    pub fn contains(&self, r: &RuleId) -> bool {
        self.0.binary_search(r).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(RuleId::as_str).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<&[&str]> for NodeId {
    fn from(ids: &[&str]) -> Self {
        NodeId::new(ids.iter().map(|s| RuleId::new(s)).collect())
    }
}

/// The condensation of an [`Rdg`]: hyper-nodes are rule SCCs, edges are RDG
/// edges lifted between distinct nodes.
#[derive(Clone, Debug, Default)]
pub struct Hrdg {
    pub nodes: BTreeSet<NodeId>,
    pub rule_node: BTreeMap<RuleId, NodeId>,
    pub pos: BTreeSet<(NodeId, NodeId)>,
    pub neg: BTreeSet<(NodeId, NodeId)>,
}

impl Hrdg {
    /// Condenses and checks safety.
    pub fn build(rdg: &Rdg) -> Result<Hrdg> {
        let comps = rdg.scc();
        check_safety(rdg, &comps)?;
        Ok(Hrdg::from_components(rdg, comps))
    }

    /// Lifts edges over a given partition, without any safety check.
    pub fn from_components(rdg: &Rdg, comps: Vec<Vec<RuleId>>) -> Hrdg {
        let mut h = Hrdg::default();
        for c in comps {
            let id = NodeId::new(c);
            for r in id.rules() {
                h.rule_node.insert(r.clone(), id.clone());
            }
            h.nodes.insert(id);
        }
        for (a, b) in &rdg.pos {
            let (na, nb) = (&h.rule_node[a], &h.rule_node[b]);
            if na != nb {
                h.pos.insert((na.clone(), nb.clone()));
            }
        }
        for (a, b) in &rdg.neg {
            let (na, nb) = (h.rule_node[a].clone(), h.rule_node[b].clone());
            h.neg.insert((na, nb));
        }
        h
    }

    pub fn node_of(&self, rule: &RuleId) -> Option<&NodeId> {
        self.rule_node.get(rule)
    }

    /// Direct successors over `pos ∪ neg`, excluding self-loops.
    pub fn successors<'a>(&'a self, n: &'a NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        let out: BTreeSet<&NodeId> = self
            .pos
            .iter()
            .chain(&self.neg)
            .filter(|(a, b)| a == n && b != n)
            .map(|(_, b)| b)
            .collect();
        out.into_iter()
    }

    /// Direct predecessors with a flag telling whether any connecting edge is
    /// negative.
    pub fn predecessors<'a>(&'a self, n: &'a NodeId) -> impl Iterator<Item = (&'a NodeId, bool)> + 'a {
        let mut out: BTreeMap<&NodeId, bool> = BTreeMap::new();
        for (a, b) in &self.pos {
            if b == n && a != n {
                out.entry(a).or_insert(false);
            }
        }
        for (a, b) in &self.neg {
            if b == n && a != n {
                out.insert(a, true);
            }
        }
        out.into_iter()
    }

    /// Whether `order` lists every node once with all edges pointing forward.
    pub fn is_topological(&self, order: &[NodeId]) -> bool {
        let pos: BTreeMap<&NodeId, usize> = order.iter().enumerate().map(|(i, n)| (n, i)).collect();
        pos.len() == order.len()
            && pos.len() == self.nodes.len()
            && self.nodes.iter().all(|n| pos.contains_key(n))
            && self
                .pos
                .iter()
                .chain(&self.neg)
                .filter(|(a, b)| a != b)
                .all(|(a, b)| pos[a] < pos[b])
    }

    /// Kahn's algorithm, always releasing the smallest ready node first.
    pub fn topological_order(&self) -> Vec<NodeId> {
        let mut indeg: BTreeMap<&NodeId, usize> = self.nodes.iter().map(|n| (n, 0)).collect();
        let mut succ: BTreeMap<&NodeId, BTreeSet<&NodeId>> = BTreeMap::new();
        for (a, b) in self.pos.iter().chain(&self.neg) {
            if a != b && succ.entry(a).or_default().insert(b) {
                *indeg.get_mut(b).unwrap() += 1;
            }
        }
        let mut ready: BTreeSet<&NodeId> =
            indeg.iter().filter(|(_, &d)| d == 0).map(|(n, _)| *n).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n.clone());
            for s in succ.get(n).into_iter().flatten() {
                let d = indeg.get_mut(s).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(s);
                }
            }
        }
        order
    }

    /// Nodes reachable from `from` (inclusive).
    pub fn reachable(&self, from: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
        let mut seen: BTreeSet<NodeId> = from.clone();
        let mut queue: VecDeque<NodeId> = from.iter().cloned().collect();
        while let Some(n) = queue.pop_front() {
            for s in self.successors(&n) {
                if seen.insert(s.clone()) {
                    queue.push_back(s.clone());
                }
            }
        }
        seen
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph hrdg {\n");
        for n in &self.nodes {
            out.push_str(&format!("  \"{n}\";\n"));
        }
        for (a, b) in &self.pos {
            out.push_str(&format!("  \"{a}\" -> \"{b}\";\n"));
        }
        for (a, b) in &self.neg {
            out.push_str(&format!("  \"{a}\" -> \"{b}\" [style=dashed];\n"));
        }
        out.push_str("}\n");
        out
    }
}

/// Shortest rule path from `from` to `to` using edges inside `members`.
fn path_within(rdg: &Rdg, members: &BTreeSet<&RuleId>, from: &RuleId, to: &RuleId) -> Vec<RuleId> {
    let succ = rdg.successors();
    let mut parent: BTreeMap<&RuleId, &RuleId> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    while let Some(v) = queue.pop_front() {
        if v == to {
            let mut path = vec![to.clone()];
            let mut cur = to;
            while cur != from {
                cur = parent[cur];
                path.push(cur.clone());
            }
            path.reverse();
            return path;
        }
        for &w in succ.get(v).into_iter().flatten() {
            if members.contains(w) && seen.insert(w) {
                parent.insert(w, v);
                queue.push_back(w);
            }
        }
    }
    vec![from.clone(), to.clone()]
}

/// Rejects negation inside a component and aggregation on any cycle.
pub fn check_safety(rdg: &Rdg, comps: &[Vec<RuleId>]) -> Result<()> {
    let mut comp_of: BTreeMap<&RuleId, usize> = BTreeMap::new();
    for (i, c) in comps.iter().enumerate() {
        for r in c {
            comp_of.insert(r, i);
        }
    }
    let members = |i: usize| comps[i].iter().collect::<BTreeSet<_>>();
    for (a, b) in &rdg.neg {
        if comp_of[a] == comp_of[b] {
            let mut cycle = vec![a.clone()];
            if a == b {
                cycle.push(a.clone());
            } else {
                cycle.extend(path_within(rdg, &members(comp_of[a]), b, a));
            }
            return Err(Error::UnsafeProgram {
                message: format!("negation through recursion ({a} negatively feeds {b})"),
                cycle,
            });
        }
    }
    for (id, rule) in &rdg.rules {
        if !rule.is_aggregate() {
            continue;
        }
        let c = comp_of[id];
        let self_loop = rdg.pos.contains(&(id.clone(), id.clone()));
        if comps[c].len() > 1 || self_loop {
            let cycle = if self_loop {
                vec![id.clone(), id.clone()]
            } else {
                let succ = rdg.successors();
                let next = succ[id]
                    .iter()
                    .find(|w| comp_of[**w] == c)
                    .copied()
                    .expect("a rule in a nontrivial component has a successor inside it");
                let mut cycle = vec![id.clone()];
                cycle.extend(path_within(rdg, &members(c), next, id));
                cycle
            };
            return Err(Error::UnsafeProgram {
                message: format!("aggregation through recursion in {id}"),
                cycle,
            });
        }
    }
    Ok(())
}
