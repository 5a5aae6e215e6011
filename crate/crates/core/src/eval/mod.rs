//! Rule evaluation: read views over stores, join planning, the join
//! executor, aggregation, and per-node fixpoints.

mod fixpoint;
mod join;
mod plan;

use std::ops::ControlFlow;

pub use fixpoint::{NodeProgram, NodeStats};
pub(crate) use fixpoint::{dred, extend_with_rules, materialize_node};
pub use join::{eval_aggregate, eval_rule, eval_rule_with_order, Compiled};
pub use plan::{is_legal_order, plan_rule, HeuristicClass, JoinPlan, PlanStep};

use crate::model::{Fact, RelKey};
use crate::storage::{DataStore, DataStoreBag, Pattern, StoreArena};

#[derive(Clone, Copy)]
pub enum Part<'a> {
    Bag {
        bag: &'a DataStoreBag,
        arena: &'a StoreArena,
    },
    Store(&'a DataStore),
}

impl Part<'_> {
    fn contains(&self, f: &Fact) -> bool {
        match self {
            Part::Bag { bag, arena } => bag.contains(arena, f),
            Part::Store(ds) => ds.contains(f),
        }
    }

    fn count_key(&self, key: RelKey) -> usize {
        match self {
            Part::Bag { bag, arena } => bag.count_key(arena, key),
            Part::Store(ds) => ds.count_key(key),
        }
    }

    fn scan<B>(&self, pat: &Pattern, f: &mut impl FnMut(Fact) -> ControlFlow<B>) -> ControlFlow<B> {
        match self {
            Part::Bag { bag, arena } => bag.scan(arena, pat, f),
            Part::Store(ds) => ds.scan(pat, f),
        }
    }
}

/// A deduplicated union of stores and bags, minus an optional excluded
/// store. Every atom occurrence of a rule reads through one view.
#[derive(Clone, Default)]
pub struct View<'a> {
    parts: Vec<Part<'a>>,
    exclude: Option<&'a DataStore>,
}

impl<'a> View<'a> {
    pub fn new() -> View<'a> {
        View::default()
    }

    pub fn of_store(ds: &'a DataStore) -> View<'a> {
        View::new().with_store(ds)
    }

    pub fn of_bag(bag: &'a DataStoreBag, arena: &'a StoreArena) -> View<'a> {
        View::new().with_bag(bag, arena)
    }

    pub fn with_store(mut self, ds: &'a DataStore) -> View<'a> {
        self.parts.push(Part::Store(ds));
        self
    }

    pub fn with_bag(mut self, bag: &'a DataStoreBag, arena: &'a StoreArena) -> View<'a> {
        self.parts.push(Part::Bag { bag, arena });
        self
    }

    pub fn excluding(mut self, ds: &'a DataStore) -> View<'a> {
        self.exclude = Some(ds);
        self
    }

    pub fn contains(&self, f: &Fact) -> bool {
        !self.exclude.is_some_and(|x| x.contains(f)) && self.parts.iter().any(|p| p.contains(f))
    }

    /// Upper bound on the facts under `key`, used as a cost estimate.
    pub fn count_key(&self, key: RelKey) -> usize {
        self.parts.iter().map(|p| p.count_key(key)).sum()
    }

    pub fn scan<B>(&self, pat: &Pattern, f: &mut impl FnMut(Fact) -> ControlFlow<B>) -> ControlFlow<B> {
        match (self.parts.as_slice(), self.exclude) {
            ([only], None) => only.scan(pat, f),
            (parts, exclude) => {
                for (i, part) in parts.iter().enumerate() {
                    let earlier = &parts[..i];
                    part.scan(pat, &mut |fact| {
                        if exclude.is_some_and(|x| x.contains(&fact))
                            || earlier.iter().any(|e| e.contains(&fact))
                        {
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

    pub fn matches(&self, pat: &Pattern) -> Vec<Fact> {
        let mut out = Vec::new();
        let _ = self.scan::<()>(pat, &mut |f| {
            out.push(f);
            ControlFlow::Continue(())
        });
        out
    }
}
