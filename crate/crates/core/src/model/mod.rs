//! Terms, atoms, rules and their textual syntax.

pub mod parse;
pub mod rule;
pub mod term;

pub use parse::{parse_aggregate_rule, parse_facts, parse_facts_as, parse_rule, parse_rules, FactFormat};
pub use rule::{
    AggOp, AggregateSpec, Atom, BinOp, Bind, Comp, Comparator, Expr, Fact, Literal, RelKey, Rule,
    RuleId,
};
pub use term::{Const, ConstValue, Term, Var, RDF_TYPE};
