//! Atoms, builtins and rules.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use super::term::{Const, Term, Var};
use crate::error::{Error, Result};

/// Rule identifier. Ordered naturally, so `r2 < r10`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RuleId(Arc<str>);

impl RuleId {
    pub fn new(id: &str) -> RuleId {
        RuleId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<&str> for RuleId {
    fn from(s: &str) -> Self {
        RuleId::new(s)
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Ord for RuleId {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(&self.0, &other.0)
    }
}

impl PartialOrd for RuleId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Compares digit runs numerically and everything else bytewise.
pub(crate) fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i].is_ascii_digit() && b[j].is_ascii_digit() {
            let si = i;
            while i < a.len() && a[i].is_ascii_digit() {
                i += 1;
            }
            let sj = j;
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            let na = trim_zeros(&a[si..i]);
            let nb = trim_zeros(&b[sj..j]);
            let ord = na.len().cmp(&nb.len()).then_with(|| na.cmp(nb));
            if ord != Ordering::Equal {
                return ord;
            }
        } else {
            let ord = a[i].cmp(&b[j]);
            if ord != Ordering::Equal {
                return ord;
            }
            i += 1;
            j += 1;
        }
    }
    (a.len() - i).cmp(&(b.len() - j)).then_with(|| a.cmp(b))
}

fn trim_zeros(digits: &[u8]) -> &[u8] {
    let start = digits.iter().position(|&d| d != b'0').unwrap_or(digits.len());
    &digits[start..]
}

/// A ground binary fact `p(s, o)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fact {
    pub p: Const,
    pub s: Const,
    pub o: Const,
}

impl Fact {
    pub fn new(p: Const, s: Const, o: Const) -> Fact {
        Fact { p, s, o }
    }

    /// Convenience constructor over IRI constants.
    pub fn iri(p: &str, s: &str, o: &str) -> Fact {
        Fact::new(Const::iri(p), Const::iri(s), Const::iri(o))
    }

    pub fn to_ntriples(&self) -> String {
        format!(
            "{} {} {} .",
            self.s.to_ntriples(),
            self.p.to_ntriples(),
            self.o.to_ntriples()
        )
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}, {})", PredName(self.p), self.s, self.o)
    }
}

impl fmt::Debug for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

struct PredName(Const);

impl fmt::Display for PredName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == Const::rdf_type() {
            return f.write_str(super::term::RDF_TYPE);
        }
        self.0.fmt(f)
    }
}

/// Dependency key of an atom: its predicate, refined by the class for
/// `rdf:type` atoms whose class is a constant.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct RelKey {
    pub pred: Const,
    pub class: Option<Const>,
}

impl RelKey {
    /// Whether some fact could match both keys.
    pub fn overlaps(&self, other: &RelKey) -> bool {
        self.pred == other.pred
            && match (self.class, other.class) {
                (Some(a), Some(b)) => a == b,
                _ => true,
            }
    }

    pub fn matches(&self, fact: &Fact) -> bool {
        fact.p == self.pred && self.class.is_none_or(|c| c == fact.o)
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub pred: Const,
    pub subject: Term,
    pub object: Term,
}

impl Atom {
    pub fn new(pred: Const, subject: Term, object: Term) -> Atom {
        Atom {
            pred,
            subject,
            object,
        }
    }

    /// Canonical form of the unary atom `class(subject)`.
    pub fn class(class: Const, subject: Term) -> Atom {
        Atom::new(Const::rdf_type(), subject, Term::Const(class))
    }

    pub fn key(&self) -> RelKey {
        let class = if self.pred == Const::rdf_type() {
            self.object.as_const()
        } else {
            None
        };
        RelKey {
            pred: self.pred,
            class,
        }
    }

    pub fn vars(&self) -> impl Iterator<Item = &Var> {
        [&self.subject, &self.object]
            .into_iter()
            .filter_map(Term::as_var)
    }

    pub fn ground(&self) -> Option<Fact> {
        Some(Fact::new(
            self.pred,
            self.subject.as_const()?,
            self.object.as_const()?,
        ))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pred == Const::rdf_type() {
            if let Some(class) = self.object.as_const() {
                if let super::term::ConstValue::Iri(name) = class.value() {
                    if super::parse::is_predicate_name(&name) {
                        return write!(f, "{}({})", name, self.subject);
                    }
                }
            }
        }
        write!(f, "{}({}, {})", PredName(self.pred), self.subject, self.object)
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Comparator {
    Gt,
    Ge,
    Eq,
    Le,
    Lt,
    Ne,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Eq => "=",
            Comparator::Le => "<=",
            Comparator::Lt => "<",
            Comparator::Ne => "!=",
        }
    }

    pub fn is_ordered(self) -> bool {
        !matches!(self, Comparator::Eq | Comparator::Ne)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

/// Arithmetic expression of a BIND.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Expr {
    Term(Term),
    Neg(Box<Expr>),
    Abs(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn vars(&self) -> Vec<&Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a Var>) {
        match self {
            Expr::Term(Term::Var(v)) => out.push(v),
            Expr::Term(Term::Const(_)) => {}
            Expr::Neg(e) | Expr::Abs(e) => e.collect_vars(out),
            Expr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8, right: bool) -> fmt::Result {
        match self {
            Expr::Term(t) => write!(f, "{t}"),
            Expr::Neg(e) => {
                f.write_str("-(")?;
                e.fmt_prec(f, 0, false)?;
                f.write_str(")")
            }
            Expr::Abs(e) => {
                f.write_str("abs(")?;
                e.fmt_prec(f, 0, false)?;
                f.write_str(")")
            }
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                let paren = p < parent || (p == parent && right);
                if paren {
                    f.write_str("(")?;
                }
                l.fmt_prec(f, p, false)?;
                write!(f, " {} ", op.symbol())?;
                r.fmt_prec(f, p, true)?;
                if paren {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0, false)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Bind {
    pub expr: Expr,
    pub target: Var,
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Comp {
    pub left: Term,
    pub op: Comparator,
    pub right: Term,
}

/// One element of a rule body.
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Pos(Atom),
    Neg(Atom),
    Bind(Bind),
    Comp(Comp),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Pos(a) => a.fmt(f),
            Literal::Neg(a) => write!(f, "not {a}"),
            Literal::Bind(b) => write!(f, "BIND({} AS {})", b.expr, b.target),
            Literal::Comp(c) => write!(f, "COMP({}, {}, {})", c.left, c.op.symbol(), c.right),
        }
    }
}

impl fmt::Debug for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum AggOp {
    Max,
    Min,
    Avg,
    Count,
    Sum,
    Med,
}

impl AggOp {
    pub fn parse(name: &str) -> Option<AggOp> {
        Some(match name.to_ascii_uppercase().as_str() {
            "MAX" => AggOp::Max,
            "MIN" => AggOp::Min,
            "AVG" => AggOp::Avg,
            "COUNT" => AggOp::Count,
            "SUM" => AggOp::Sum,
            "MED" => AggOp::Med,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AggOp::Max => "MAX",
            AggOp::Min => "MIN",
            AggOp::Avg => "AVG",
            AggOp::Count => "COUNT",
            AggOp::Sum => "SUM",
            AggOp::Med => "MED",
        }
    }
}

/// `AGGREGATE(body) ON group WITH op(value) AS result`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct AggregateSpec {
    pub group: Var,
    pub op: AggOp,
    pub value: Var,
    pub result: Var,
}

/// A rule `head :- body`. For aggregate rules the body holds the positive
/// atoms inside `AGGREGATE(...)`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub id: RuleId,
    pub head: Atom,
    pub body: Vec<Literal>,
    pub aggregate: Option<AggregateSpec>,
}

impl Rule {
    pub fn positive_body(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter_map(|l| match l {
            Literal::Pos(a) => Some(a),
            _ => None,
        })
    }

    pub fn negative_body(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter_map(|l| match l {
            Literal::Neg(a) => Some(a),
            _ => None,
        })
    }

    pub fn builtins(&self) -> impl Iterator<Item = &Literal> {
        self.body
            .iter()
            .filter(|l| matches!(l, Literal::Bind(_) | Literal::Comp(_)))
    }

    pub fn is_aggregate(&self) -> bool {
        self.aggregate.is_some()
    }

    pub fn with_id(mut self, id: RuleId) -> Rule {
        self.id = id;
        self
    }

    /// Keys of every atom this rule reads, positive or negated.
    pub fn body_keys(&self) -> impl Iterator<Item = RelKey> + '_ {
        self.body.iter().filter_map(|l| match l {
            Literal::Pos(a) | Literal::Neg(a) => Some(a.key()),
            _ => None,
        })
    }

    /// Range restriction and builtin well-formedness.
    pub fn validate(&self) -> Result<()> {
        let unsafe_rule = |message: String| Error::Safety {
            rule: self.id.to_string(),
            message,
        };
        let positive: BTreeSet<&Var> = self.positive_body().flat_map(Atom::vars).collect();

        if let Some(agg) = &self.aggregate {
            let agg_err = |message: String| Error::Aggregate {
                rule: self.id.to_string(),
                message,
            };
            if self.body.iter().any(|l| !matches!(l, Literal::Pos(_))) {
                return Err(agg_err("aggregate body must contain positive atoms only".into()));
            }
            if self.body.is_empty() {
                return Err(agg_err("empty aggregate body".into()));
            }
            for (role, v) in [("group", &agg.group), ("aggregated", &agg.value)] {
                if !positive.contains(v) {
                    return Err(agg_err(format!("{role} variable {v} does not occur in the body")));
                }
            }
            if positive.contains(&agg.result) {
                return Err(agg_err(format!(
                    "result variable {} already occurs in the body",
                    agg.result
                )));
            }
            if !self.head.vars().any(|v| *v == agg.result) {
                return Err(agg_err(format!(
                    "result variable {} does not occur in the head",
                    agg.result
                )));
            }
            for v in self.head.vars() {
                if *v != agg.group && *v != agg.result {
                    return Err(unsafe_rule(format!(
                        "head variable {v} is neither the group nor the result variable"
                    )));
                }
            }
            return Ok(());
        }

        let mut targets: BTreeSet<&Var> = BTreeSet::new();
        for lit in &self.body {
            if let Literal::Bind(b) = lit {
                if positive.contains(&b.target) {
                    return Err(unsafe_rule(format!(
                        "BIND target {} is already bound by a positive atom",
                        b.target
                    )));
                }
                if !targets.insert(&b.target) {
                    return Err(unsafe_rule(format!("BIND target {} bound twice", b.target)));
                }
            }
        }
        let bound = |v: &Var| positive.contains(v) || targets.contains(v);

        for v in self.head.vars() {
            if !bound(v) {
                return Err(unsafe_rule(format!(
                    "head variable {v} does not occur in a positive body atom"
                )));
            }
        }
        for lit in &self.body {
            match lit {
                Literal::Bind(b) => {
                    for v in b.expr.vars() {
                        if !bound(v) {
                            return Err(unsafe_rule(format!("BIND uses unbound variable {v}")));
                        }
                    }
                }
                Literal::Comp(c) => {
                    for v in [&c.left, &c.right].into_iter().filter_map(Term::as_var) {
                        if !bound(v) {
                            return Err(unsafe_rule(format!("COMP uses unbound variable {v}")));
                        }
                    }
                }
                _ => {}
            }
        }
        // Variables bound nowhere else may occur in one negated atom only.
        let mut neg_owner: HashMap<&Var, usize> = HashMap::new();
        for (i, lit) in self.body.iter().enumerate() {
            if let Literal::Neg(a) = lit {
                for v in a.vars() {
                    if bound(v) {
                        continue;
                    }
                    if let Some(&owner) = neg_owner.get(v) {
                        if owner != i {
                            return Err(unsafe_rule(format!(
                                "variable {v} occurs only in negated atoms, in more than one"
                            )));
                        }
                    } else {
                        neg_owner.insert(v, i);
                    }
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.id.is_empty() {
            write!(f, "{}: ", self.id)?;
        }
        write!(f, "{} :- ", self.head)?;
        let body = self
            .body
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" ∧ ");
        match &self.aggregate {
            Some(agg) => write!(
                f,
                "AGGREGATE({body}) ON {} WITH {}({}) AS {}.",
                agg.group,
                agg.op.name(),
                agg.value,
                agg.result
            ),
            None => write!(f, "{body}."),
        }
    }
}

impl fmt::Debug for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
