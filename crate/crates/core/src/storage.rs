//! Indexed fact stores and handle bags.
//!
//! A [`DataStore`] keeps every fact twice, once under predicate→subject→objects
//! and once under predicate→object→subjects. A [`DataStoreBag`] is a logical
//! union of stores held by handle; it never copies facts.

use std::collections::hash_map::Entry;
use std::ops::ControlFlow;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rustc_hash::{FxHashMap, FxHashSet};

use crate::model::{Const, Fact, RelKey};

type Index = FxHashMap<Const, FxHashMap<Const, FxHashSet<Const>>>;

/// A triple pattern with a constant predicate; `None` is a wildcard.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pattern {
    pub p: Const,
    pub s: Option<Const>,
    pub o: Option<Const>,
}

impl Pattern {
    pub fn new(p: Const, s: Option<Const>, o: Option<Const>) -> Pattern {
        Pattern { p, s, o }
    }

    pub fn any(p: Const) -> Pattern {
        Pattern::new(p, None, None)
    }

    pub fn matches(&self, f: &Fact) -> bool {
        f.p == self.p && self.s.is_none_or(|s| s == f.s) && self.o.is_none_or(|o| o == f.o)
    }
}

#[derive(Default)]
pub struct DataStore {
    pso: Index,
    pos: Index,
    pred_len: FxHashMap<Const, usize>,
    len: usize,
    mutations: u64,
    probes: AtomicU64,
}

impl Clone for DataStore {
    fn clone(&self) -> Self {
        DataStore {
            pso: self.pso.clone(),
            pos: self.pos.clone(),
            pred_len: self.pred_len.clone(),
            len: self.len,
            mutations: self.mutations,
            probes: AtomicU64::new(self.probes.load(Ordering::Relaxed)),
        }
    }
}

impl std::fmt::Debug for DataStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DataStore").field("len", &self.len).finish()
    }
}

impl PartialEq for DataStore {
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.facts().all(|f| other.contains(&f))
    }
}

fn index_insert(index: &mut Index, p: Const, a: Const, b: Const) -> bool {
    index.entry(p).or_default().entry(a).or_default().insert(b)
}

fn index_remove(index: &mut Index, p: Const, a: Const, b: Const) -> bool {
    let Some(by_first) = index.get_mut(&p) else {
        return false;
    };
    let Some(set) = by_first.get_mut(&a) else {
        return false;
    };
    if !set.remove(&b) {
        return false;
    }
    if set.is_empty() {
        by_first.remove(&a);
        if by_first.is_empty() {
            index.remove(&p);
        }
    }
    true
}

impl DataStore {
    pub fn new() -> DataStore {
        DataStore::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of successful inserts and deletes so far.
    pub fn mutations(&self) -> u64 {
        self.mutations
    }

    /// Number of pattern lookups served so far.
    pub fn probes(&self) -> u64 {
        self.probes.load(Ordering::Relaxed)
    }

    pub fn insert(&mut self, f: Fact) -> bool {
        if !index_insert(&mut self.pso, f.p, f.s, f.o) {
            return false;
        }
        index_insert(&mut self.pos, f.p, f.o, f.s);
        *self.pred_len.entry(f.p).or_default() += 1;
        self.len += 1;
        self.mutations += 1;
        true
    }

    pub fn delete(&mut self, f: &Fact) -> bool {
        if !index_remove(&mut self.pso, f.p, f.s, f.o) {
            return false;
        }
        index_remove(&mut self.pos, f.p, f.o, f.s);
        if let Entry::Occupied(mut e) = self.pred_len.entry(f.p) {
            *e.get_mut() -= 1;
            if *e.get() == 0 {
                e.remove();
            }
        }
        self.len -= 1;
        self.mutations += 1;
        true
    }

    pub fn extend(&mut self, facts: impl IntoIterator<Item = Fact>) -> usize {
        facts.into_iter().filter(|f| self.insert(*f)).count()
    }

    pub fn contains(&self, f: &Fact) -> bool {
        self.pso
            .get(&f.p)
            .and_then(|m| m.get(&f.s))
            .is_some_and(|set| set.contains(&f.o))
    }

    pub fn has_predicate(&self, p: Const) -> bool {
        self.pred_len.contains_key(&p)
    }

    pub fn predicates(&self) -> impl Iterator<Item = Const> + '_ {
        self.pred_len.keys().copied()
    }

    pub fn count_pred(&self, p: Const) -> usize {
        self.pred_len.get(&p).copied().unwrap_or(0)
    }

    /// Facts under a dependency key; class keys use the object index.
    pub fn count_key(&self, key: RelKey) -> usize {
        match key.class {
            Some(c) => self
                .pos
                .get(&key.pred)
                .and_then(|m| m.get(&c))
                .map_or(0, |s| s.len()),
            None => self.count_pred(key.pred),
        }
    }

    /// Visits matching facts. Subject-bound patterns go through PSO,
    /// object-only patterns through POS, others scan the predicate.
    pub fn scan<B>(&self, pat: &Pattern, f: &mut impl FnMut(Fact) -> ControlFlow<B>) -> ControlFlow<B> {
        self.probes.fetch_add(1, Ordering::Relaxed);
        let p = pat.p;
        match (pat.s, pat.o) {
            (Some(s), Some(o)) => {
                if self.contains(&Fact::new(p, s, o)) {
                    f(Fact::new(p, s, o))?;
                }
            }
            (Some(s), None) => {
                if let Some(objects) = self.pso.get(&p).and_then(|m| m.get(&s)) {
                    for &o in objects {
                        f(Fact::new(p, s, o))?;
                    }
                }
            }
            (None, Some(o)) => {
                if let Some(subjects) = self.pos.get(&p).and_then(|m| m.get(&o)) {
                    for &s in subjects {
                        f(Fact::new(p, s, o))?;
                    }
                }
            }
            (None, None) => {
                if let Some(by_subject) = self.pso.get(&p) {
                    for (&s, objects) in by_subject {
                        for &o in objects {
                            f(Fact::new(p, s, o))?;
                        }
                    }
                }
            }
        }
        ControlFlow::Continue(())
    }

    pub fn matches(&self, pat: &Pattern) -> Vec<Fact> {
        let mut out = Vec::new();
        let _ = self.scan::<()>(pat, &mut |f| {
            out.push(f);
            ControlFlow::Continue(())
        });
        out
    }

    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.pso.iter().flat_map(|(&p, by_s)| {
            by_s.iter()
                .flat_map(move |(&s, objs)| objs.iter().map(move |&o| Fact::new(p, s, o)))
        })
    }

    /// Facts sorted by their N-Triples rendering.
    pub fn sorted_ntriples(&self) -> Vec<String> {
        sorted_ntriples(self.facts())
    }

    /// Cross-index consistency check, for tests and debug assertions.
    pub fn check_invariants(&self) -> bool {
        let mut n = 0;
        let mut per_pred: FxHashMap<Const, usize> = FxHashMap::default();
        for f in self.facts() {
            n += 1;
            *per_pred.entry(f.p).or_default() += 1;
            let back = self
                .pos
                .get(&f.p)
                .and_then(|m| m.get(&f.o))
                .is_some_and(|s| s.contains(&f.s));
            if !back {
                return false;
            }
        }
        let pos_count: usize = self
            .pos
            .values()
            .flat_map(|m| m.values())
            .map(|s| s.len())
            .sum();
        let no_empties = [&self.pso, &self.pos]
            .iter()
            .all(|ix| ix.values().all(|m| !m.is_empty() && m.values().all(|s| !s.is_empty())));
        n == self.len && pos_count == n && per_pred == self.pred_len && no_empties
    }
}

impl FromIterator<Fact> for DataStore {
    fn from_iter<I: IntoIterator<Item = Fact>>(iter: I) -> Self {
        let mut ds = DataStore::new();
        ds.extend(iter);
        ds
    }
}

pub fn sorted_ntriples(facts: impl Iterator<Item = Fact>) -> Vec<String> {
    let mut lines: Vec<String> = facts.map(|f| f.to_ntriples()).collect();
    lines.sort();
    lines.dedup();
    lines
}

/// Handle to a store owned by a [`StoreArena`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StoreId(u32);

impl std::fmt::Display for StoreId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ds{}", self.0)
    }
}

/// Owner of all stores. Stores are reference counted so cloning an arena is
/// cheap; mutation copies a store only while an older clone still shares it.
#[derive(Clone, Default, Debug)]
pub struct StoreArena {
    stores: FxHashMap<StoreId, Arc<DataStore>>,
    next: u32,
}

impl StoreArena {
    pub fn new() -> StoreArena {
        StoreArena::default()
    }

    pub fn create(&mut self) -> StoreId {
        self.insert(DataStore::new())
    }

    pub fn insert(&mut self, ds: DataStore) -> StoreId {
        let id = StoreId(self.next);
        self.next += 1;
        self.stores.insert(id, Arc::new(ds));
        id
    }

    pub fn get(&self, id: StoreId) -> &DataStore {
        self.stores
            .get(&id)
            .unwrap_or_else(|| panic!("store {id} is not in the arena"))
    }

    pub fn try_get(&self, id: StoreId) -> Option<&DataStore> {
        self.stores.get(&id).map(|a| &**a)
    }

    pub fn get_mut(&mut self, id: StoreId) -> &mut DataStore {
        Arc::make_mut(
            self.stores
                .get_mut(&id)
                .unwrap_or_else(|| panic!("store {id} is not in the arena")),
        )
    }

    /// Temporarily moves a store out so it can be written while the rest of
    /// the arena is read. Pair with [`StoreArena::put`].
    pub fn take(&mut self, id: StoreId) -> DataStore {
        let arc = self
            .stores
            .insert(id, Arc::new(DataStore::new()))
            .unwrap_or_else(|| panic!("store {id} is not in the arena"));
        Arc::try_unwrap(arc).unwrap_or_else(|shared| (*shared).clone())
    }

    pub fn put(&mut self, id: StoreId, ds: DataStore) {
        self.stores.insert(id, Arc::new(ds));
    }

    pub fn remove(&mut self, id: StoreId) -> Option<Arc<DataStore>> {
        self.stores.remove(&id)
    }

    pub fn contains(&self, id: StoreId) -> bool {
        self.stores.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.stores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stores.is_empty()
    }
}

/// A logical union of stores, held by handle, with a predicate→stores index.
///
/// The index is maintained explicitly: after member stores change, call
/// [`DataStoreBag::refresh_index`].
#[derive(Clone, Default, Debug)]
pub struct DataStoreBag {
    members: Vec<StoreId>,
    pds: FxHashMap<Const, Vec<StoreId>>,
}

impl DataStoreBag {
    pub fn new() -> DataStoreBag {
        DataStoreBag::default()
    }

    pub fn stores(&self) -> &[StoreId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains_store(&self, id: StoreId) -> bool {
        self.members.contains(&id)
    }

    /// Registers a handle; no facts are copied. Adding a member twice is a
    /// no-op.
    pub fn add_store(&mut self, arena: &StoreArena, id: StoreId) {
        if self.members.contains(&id) {
            return;
        }
        self.members.push(id);
        for p in arena.get(id).predicates() {
            self.pds.entry(p).or_default().push(id);
        }
    }

    pub fn remove_store(&mut self, id: StoreId) -> bool {
        let Some(at) = self.members.iter().position(|&m| m == id) else {
            return false;
        };
        self.members.remove(at);
        self.pds.retain(|_, ids| {
            ids.retain(|&m| m != id);
            !ids.is_empty()
        });
        true
    }

    /// Rebuilds the predicate index from the current member contents.
    pub fn refresh_index(&mut self, arena: &StoreArena) {
        self.pds.clear();
        for &id in &self.members {
            for p in arena.get(id).predicates() {
                self.pds.entry(p).or_default().push(id);
            }
        }
    }

    /// Members holding at least one fact under `p`, as of the last refresh.
    pub fn stores_for(&self, p: Const) -> &[StoreId] {
        self.pds.get(&p).map_or(&[], |v| v.as_slice())
    }

    pub fn indexed_predicates(&self) -> impl Iterator<Item = Const> + '_ {
        self.pds.keys().copied()
    }

    pub fn contains(&self, arena: &StoreArena, f: &Fact) -> bool {
        self.stores_for(f.p).iter().any(|&id| arena.get(id).contains(f))
    }

    pub fn count_key(&self, arena: &StoreArena, key: RelKey) -> usize {
        self.stores_for(key.pred)
            .iter()
            .map(|&id| arena.get(id).count_key(key))
            .sum()
    }

    /// Visits the union of matches over the indexed members, each fact once.
    /// Stores not indexed under the pattern's predicate are not touched.
    pub fn scan<B>(
        &self,
        arena: &StoreArena,
        pat: &Pattern,
        f: &mut impl FnMut(Fact) -> ControlFlow<B>,
    ) -> ControlFlow<B> {
        let ids = self.stores_for(pat.p);
        match ids {
            [] => ControlFlow::Continue(()),
            [only] => arena.get(*only).scan(pat, f),
            _ => {
                for (i, &id) in ids.iter().enumerate() {
                    let earlier = &ids[..i];
                    arena.get(id).scan(pat, &mut |fact| {
                        if earlier.iter().any(|&e| arena.get(e).contains(&fact)) {
                            ControlFlow::Continue(())
                        } else {
                            f(fact)
                        }
                    })?;
                }
                ControlFlow::Continue(())
            }
        }
    }

    pub fn matches(&self, arena: &StoreArena, pat: &Pattern) -> Vec<Fact> {
        let mut out = Vec::new();
        let _ = self.scan::<()>(arena, pat, &mut |f| {
            out.push(f);
            ControlFlow::Continue(())
        });
        out
    }

    /// Every distinct fact of the bag.
    pub fn facts(&self, arena: &StoreArena) -> FxHashSet<Fact> {
        self.members
            .iter()
            .flat_map(|&id| arena.get(id).facts())
            .collect()
    }
}
