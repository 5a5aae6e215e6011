//! Left-deep nested-loop join over views, with builtins, negation as
//! failure and grouped aggregation.

use std::ops::ControlFlow;

use rustc_hash::FxHashMap;

use super::plan::plan_rule;
use super::View;
use crate::error::{Error, Result};
use crate::model::{
    AggOp, BinOp, Comparator, Const, Expr, Fact, Literal, Rule, RuleId, Term, Var,
};
use crate::storage::Pattern;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Arg {
    Slot(usize),
    Const(Const),
}

#[derive(Clone, Debug)]
enum CExpr {
    Arg(Arg),
    Neg(Box<CExpr>),
    Abs(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
}

#[derive(Clone, Debug)]
enum CLit {
    Pos { pred: Const, s: Arg, o: Arg },
    Neg { pred: Const, s: Arg, o: Arg },
    Bind { expr: CExpr, target: usize },
    Comp { left: Arg, op: Comparator, right: Arg },
}

/// A rule with variables resolved to binding slots.
#[derive(Clone, Debug)]
pub struct Compiled {
    id: RuleId,
    vars: Vec<Var>,
    head: (Const, Arg, Arg),
    lits: Vec<CLit>,
}

enum Exit {
    Stop,
    Err(Error),
}

pub(crate) type Bindings = [Option<Const>];

impl Compiled {
    pub fn new(rule: &Rule) -> Compiled {
        let mut vars: Vec<Var> = Vec::new();
        let mut arg = |t: &Term| match t {
            Term::Const(c) => Arg::Const(*c),
            Term::Var(v) => Arg::Slot(match vars.iter().position(|x| x == v) {
                Some(i) => i,
                None => {
                    vars.push(v.clone());
                    vars.len() - 1
                }
            }),
        };
        fn expr(e: &Expr, arg: &mut impl FnMut(&Term) -> Arg) -> CExpr {
            match e {
                Expr::Term(t) => CExpr::Arg(arg(t)),
                Expr::Neg(e) => CExpr::Neg(Box::new(expr(e, arg))),
                Expr::Abs(e) => CExpr::Abs(Box::new(expr(e, arg))),
                Expr::Binary(op, l, r) => {
                    CExpr::Bin(*op, Box::new(expr(l, arg)), Box::new(expr(r, arg)))
                }
            }
        }
        let head = (rule.head.pred, arg(&rule.head.subject), arg(&rule.head.object));
        let lits = rule
            .body
            .iter()
            .map(|l| match l {
                Literal::Pos(a) => CLit::Pos {
                    pred: a.pred,
                    s: arg(&a.subject),
                    o: arg(&a.object),
                },
                Literal::Neg(a) => CLit::Neg {
                    pred: a.pred,
                    s: arg(&a.subject),
                    o: arg(&a.object),
                },
                Literal::Bind(b) => {
                    let e = expr(&b.expr, &mut arg);
                    let Arg::Slot(target) = arg(&Term::Var(b.target.clone())) else {
                        unreachable!()
                    };
                    CLit::Bind { expr: e, target }
                }
                Literal::Comp(c) => CLit::Comp {
                    left: arg(&c.left),
                    op: c.op,
                    right: arg(&c.right),
                },
            })
            .collect();
        Compiled {
            id: rule.id.clone(),
            vars,
            head,
            lits,
        }
    }

    pub fn slot(&self, v: &Var) -> Option<usize> {
        self.vars.iter().position(|x| x == v)
    }

    pub fn num_slots(&self) -> usize {
        self.vars.len()
    }

    fn value(a: Arg, b: &Bindings) -> Option<Const> {
        match a {
            Arg::Const(c) => Some(c),
            Arg::Slot(i) => b[i],
        }
    }

    /// Fresh bindings with the head pre-bound to `fact`; `None` if the head
    /// cannot match it.
    pub(crate) fn bind_head(&self, fact: &Fact) -> Option<Vec<Option<Const>>> {
        let mut b = vec![None; self.vars.len()];
        if fact.p != self.head.0 {
            return None;
        }
        for (arg, val) in [(self.head.1, fact.s), (self.head.2, fact.o)] {
            match arg {
                Arg::Const(c) if c != val => return None,
                Arg::Const(_) => {}
                Arg::Slot(i) => match b[i] {
                    Some(prev) if prev != val => return None,
                    _ => b[i] = Some(val),
                },
            }
        }
        Some(b)
    }

    pub(crate) fn head_fact(&self, b: &Bindings) -> Fact {
        let get = |a| Compiled::value(a, b).expect("head variables are bound by a safe body");
        Fact::new(self.head.0, get(self.head.1), get(self.head.2))
    }

    /// Runs the body in `order`, reading literal `i` through `views[i]`,
    /// and calls `out` with every complete binding. `out` may stop the
    /// enumeration by breaking.
    pub(crate) fn run(
        &self,
        order: &[usize],
        views: &[&View],
        bindings: &mut [Option<Const>],
        out: &mut dyn FnMut(&Bindings) -> ControlFlow<()>,
    ) -> Result<()> {
        match self.step(0, order, views, bindings, out) {
            ControlFlow::Continue(()) | ControlFlow::Break(Exit::Stop) => Ok(()),
            ControlFlow::Break(Exit::Err(e)) => Err(e),
        }
    }

    fn step(
        &self,
        k: usize,
        order: &[usize],
        views: &[&View],
        b: &mut [Option<Const>],
        out: &mut dyn FnMut(&Bindings) -> ControlFlow<()>,
    ) -> ControlFlow<Exit> {
        let Some(&li) = order.get(k) else {
            return match out(b) {
                ControlFlow::Continue(()) => ControlFlow::Continue(()),
                ControlFlow::Break(()) => ControlFlow::Break(Exit::Stop),
            };
        };
        match &self.lits[li] {
            &CLit::Pos { pred, s, o } => {
                let sv = Compiled::value(s, b);
                let ov = Compiled::value(o, b);
                let same = sv.is_none() && s == o;
                let pat = Pattern::new(pred, sv, ov);
                views[li].scan(&pat, &mut |f: Fact| {
                    if same && f.s != f.o {
                        return ControlFlow::Continue(());
                    }
                    if let (None, Arg::Slot(i)) = (sv, s) {
                        b[i] = Some(f.s);
                    }
                    if let (None, Arg::Slot(i)) = (ov, o) {
                        b[i] = Some(f.o);
                    }
                    let r = self.step(k + 1, order, views, b, out);
                    if let (None, Arg::Slot(i)) = (sv, s) {
                        b[i] = None;
                    }
                    if let (None, Arg::Slot(i)) = (ov, o) {
                        b[i] = None;
                    }
                    r
                })
            }
            &CLit::Neg { pred, s, o } => {
                let sv = Compiled::value(s, b);
                let ov = Compiled::value(o, b);
                let same = sv.is_none() && s == o;
                let pat = Pattern::new(pred, sv, ov);
                let blocked = views[li]
                    .scan(&pat, &mut |f: Fact| {
                        if same && f.s != f.o {
                            ControlFlow::Continue(())
                        } else {
                            ControlFlow::Break(())
                        }
                    })
                    .is_break();
                if blocked {
                    ControlFlow::Continue(())
                } else {
                    self.step(k + 1, order, views, b, out)
                }
            }
            CLit::Bind { expr, target } => {
                let v = match self.eval(expr, b) {
                    Ok(v) => v,
                    Err(e) => return ControlFlow::Break(Exit::Err(e)),
                };
                let Some(c) = Const::number(v) else {
                    return ControlFlow::Break(Exit::Err(Error::Arithmetic {
                        rule: self.id.clone(),
                        message: format!("BIND produced a non-finite value {v}"),
                    }));
                };
                let target = *target;
                if let Some(prev) = b[target] {
                    // Target pre-bound (head-driven rederivation): filter.
                    return if prev == c {
                        self.step(k + 1, order, views, b, out)
                    } else {
                        ControlFlow::Continue(())
                    };
                }
                b[target] = Some(c);
                let r = self.step(k + 1, order, views, b, out);
                b[target] = None;
                r
            }
            &CLit::Comp { left, op, right } => {
                let l = Compiled::value(left, b).expect("planned after binding");
                let r = Compiled::value(right, b).expect("planned after binding");
                match self.compare(l, op, r) {
                    Ok(true) => self.step(k + 1, order, views, b, out),
                    Ok(false) => ControlFlow::Continue(()),
                    Err(e) => ControlFlow::Break(Exit::Err(e)),
                }
            }
        }
    }

    fn number(&self, c: Const, context: &str) -> Result<f64> {
        c.as_number().ok_or_else(|| Error::Type {
            rule: self.id.clone(),
            message: format!("{context} needs a number, got {c}"),
        })
    }

    fn eval(&self, e: &CExpr, b: &Bindings) -> Result<f64> {
        Ok(match e {
            CExpr::Arg(a) => {
                let c = Compiled::value(*a, b).expect("planned after binding");
                self.number(c, "arithmetic")?
            }
            CExpr::Neg(e) => -self.eval(e, b)?,
            CExpr::Abs(e) => self.eval(e, b)?.abs(),
            CExpr::Bin(op, l, r) => {
                let (l, r) = (self.eval(l, b)?, self.eval(r, b)?);
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r == 0.0 {
                            return Err(Error::Arithmetic {
                                rule: self.id.clone(),
                                message: format!("division by zero ({l} / 0)"),
                            });
                        }
                        l / r
                    }
                }
            }
        })
    }

    fn compare(&self, l: Const, op: Comparator, r: Const) -> Result<bool> {
        if !op.is_ordered() {
            let eq = l == r;
            return Ok(if op == Comparator::Eq { eq } else { !eq });
        }
        let ctx = format!("comparison {}", op.symbol());
        let (a, b) = (self.number(l, &ctx)?, self.number(r, &ctx)?);
        Ok(match op {
            Comparator::Gt => a > b,
            Comparator::Ge => a >= b,
            Comparator::Le => a <= b,
            Comparator::Lt => a < b,
            Comparator::Eq | Comparator::Ne => unreachable!(),
        })
    }
}

/// Evaluates a non-aggregate rule once with every literal reading `view`,
/// using the heuristic plan. Returns the distinct head facts.
pub fn eval_rule(rule: &Rule, view: &View) -> Result<Vec<Fact>> {
    let plan = plan_rule(
        rule,
        |i| match &rule.body[i] {
            Literal::Pos(a) | Literal::Neg(a) => view.count_key(a.key()),
            _ => 0,
        },
        &[],
    )?;
    eval_rule_with_order(rule, &plan.order(), view)
}

/// Like [`eval_rule`] with an explicit literal order.
pub fn eval_rule_with_order(rule: &Rule, order: &[usize], view: &View) -> Result<Vec<Fact>> {
    let compiled = Compiled::new(rule);
    let views = vec![view; rule.body.len()];
    let mut b = vec![None; compiled.num_slots()];
    let mut seen = rustc_hash::FxHashSet::default();
    let mut out = Vec::new();
    compiled.run(order, &views, &mut b, &mut |b| {
        let f = compiled.head_fact(b);
        if seen.insert(f) {
            out.push(f);
        }
        ControlFlow::Continue(())
    })?;
    Ok(out)
}

/// Applies an aggregate operator to a group's values.
pub(crate) fn aggregate_values(rule: &RuleId, op: AggOp, values: &[Const]) -> Result<f64> {
    if op == AggOp::Count {
        return Ok(values.len() as f64);
    }
    let mut nums = Vec::with_capacity(values.len());
    for v in values {
        nums.push(v.as_number().ok_or_else(|| Error::Type {
            rule: rule.clone(),
            message: format!("{} over non-numeric value {v}", op.name()),
        })?);
    }
    let n = nums.len() as f64;
    Ok(match op {
        AggOp::Count => unreachable!(),
        AggOp::Sum => nums.iter().sum(),
        AggOp::Avg => nums.iter().sum::<f64>() / n,
        AggOp::Min => nums.iter().copied().fold(f64::INFINITY, f64::min),
        AggOp::Max => nums.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        AggOp::Med => {
            nums.sort_by(f64::total_cmp);
            let mid = nums.len() / 2;
            if nums.len() % 2 == 1 {
                nums[mid]
            } else {
                (nums[mid - 1] + nums[mid]) / 2.0
            }
        }
    })
}

/// Evaluates an aggregate rule: enumerate the distinct body bindings, group
/// them by the group variable, fold the aggregated variable's values (a
/// multiset, one entry per binding) and emit one head fact per group.
pub fn eval_aggregate(rule: &Rule, view: &View) -> Result<Vec<Fact>> {
    let agg = rule.aggregate.as_ref().expect("aggregate rule");
    let plan = plan_rule(
        rule,
        |i| match &rule.body[i] {
            Literal::Pos(a) => view.count_key(a.key()),
            _ => 0,
        },
        &[],
    )?;
    let compiled = Compiled::new(rule);
    let group = compiled.slot(&agg.group).expect("validated");
    let value = compiled.slot(&agg.value).expect("validated");
    let views = vec![view; rule.body.len()];
    let mut b = vec![None; compiled.num_slots()];
    let mut groups: FxHashMap<Const, Vec<Const>> = FxHashMap::default();
    compiled.run(&plan.order(), &views, &mut b, &mut |b| {
        groups
            .entry(b[group].expect("bound"))
            .or_default()
            .push(b[value].expect("bound"));
        ControlFlow::Continue(())
    })?;
    let result = compiled.slot(&agg.result).expect("result occurs in the head");
    let mut out = Vec::with_capacity(groups.len());
    for (g, values) in groups {
        let v = aggregate_values(&rule.id, agg.op, &values)?;
        let c = Const::number(v).ok_or_else(|| Error::Arithmetic {
            rule: rule.id.clone(),
            message: format!("{} overflowed", agg.op.name()),
        })?;
        let mut hb = vec![None; compiled.num_slots()];
        hb[group] = Some(g);
        hb[result] = Some(c);
        out.push(compiled.head_fact(&hb));
    }
    Ok(out)
}
