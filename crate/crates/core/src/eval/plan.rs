//! Heuristic left-deep join ordering.
//!
//! Positive atoms come first, greedily picking the best access class given
//! the variables bound so far: `P(S,O)`, then `P(?s,O)`/`P(S,?o)`, then
//! `P(?s,?o)`, then class atoms `C(?s)`. Ties go to the smaller relation,
//! then to source order. BINDs follow in dependency order, then COMPs,
//! then negated atoms ranked the same way, and aggregation last.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{Atom, Const, Literal, Rule, RuleId, Term, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeuristicClass {
    BoundBound,
    SubjectBound,
    ObjectBound,
    Free,
    Class,
    Bind,
    Comp,
    Aggregation,
}

impl HeuristicClass {
    fn rank(self) -> u8 {
        match self {
            HeuristicClass::BoundBound => 0,
            HeuristicClass::SubjectBound | HeuristicClass::ObjectBound => 1,
            HeuristicClass::Free => 2,
            HeuristicClass::Class => 3,
            HeuristicClass::Bind => 4,
            HeuristicClass::Comp => 5,
            HeuristicClass::Aggregation => 6,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            HeuristicClass::BoundBound => "P(S,O)",
            HeuristicClass::SubjectBound => "P(S,?o)",
            HeuristicClass::ObjectBound => "P(?s,O)",
            HeuristicClass::Free => "P(?s,?o)",
            HeuristicClass::Class => "C(?s)",
            HeuristicClass::Bind => "Bind",
            HeuristicClass::Comp => "Comp",
            HeuristicClass::Aggregation => "Aggregation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanStep {
    /// Index into the rule body; equals the body length for the
    /// aggregation step.
    pub literal: usize,
    pub class: HeuristicClass,
    pub negated: bool,
    pub estimate: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JoinPlan {
    pub rule: RuleId,
    pub steps: Vec<PlanStep>,
}

impl JoinPlan {
    /// Body literal indices in execution order.
    pub fn order(&self) -> Vec<usize> {
        self.steps
            .iter()
            .filter(|s| s.class != HeuristicClass::Aggregation)
            .map(|s| s.literal)
            .collect()
    }

    pub fn render(&self, rule: &Rule) -> String {
        let steps: Vec<String> = self
            .steps
            .iter()
            .map(|s| {
                let tag = if s.negated {
                    format!("not {}", s.class.label())
                } else {
                    s.class.label().to_string()
                };
                match rule.body.get(s.literal) {
                    Some(lit @ (Literal::Pos(_) | Literal::Neg(_))) => {
                        format!("{lit} [{tag}, ~{}]", s.estimate)
                    }
                    Some(lit) => format!("{lit} [{tag}]"),
                    None => format!("[{tag}]"),
                }
            })
            .collect();
        format!("{}: {}", self.rule, steps.join(" -> "))
    }
}

impl fmt::Display for JoinPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let steps: Vec<String> = self
            .steps
            .iter()
            .map(|s| {
                let neg = if s.negated { "not " } else { "" };
                format!("#{}:{neg}{}", s.literal, s.class.label())
            })
            .collect();
        write!(f, "{}: {}", self.rule, steps.join(" -> "))
    }
}

fn is_bound(t: &Term, bound: &HashSet<Var>) -> bool {
    match t {
        Term::Const(_) => true,
        Term::Var(v) => bound.contains(v),
    }
}

pub(crate) fn atom_class(a: &Atom, bound: &HashSet<Var>) -> HeuristicClass {
    let sb = is_bound(&a.subject, bound);
    let ob = is_bound(&a.object, bound);
    if a.pred == Const::rdf_type() && a.object.as_const().is_some() {
        return if sb {
            HeuristicClass::BoundBound
        } else {
            HeuristicClass::Class
        };
    }
    match (sb, ob) {
        (true, true) => HeuristicClass::BoundBound,
        (true, false) => HeuristicClass::SubjectBound,
        (false, true) => HeuristicClass::ObjectBound,
        (false, false) => HeuristicClass::Free,
    }
}

/// Orders the body of `rule`. `estimate(i)` is the size of the relation
/// literal `i` reads; `prebound` lists variables bound before the body runs.
pub fn plan_rule(
    rule: &Rule,
    estimate: impl Fn(usize) -> usize,
    prebound: &[Var],
) -> Result<JoinPlan> {
    let mut bound: HashSet<Var> = prebound.iter().cloned().collect();
    let mut steps = Vec::with_capacity(rule.body.len() + 1);
    let plan_err = |message: String| Error::Plan {
        rule: rule.id.clone(),
        message,
    };

    let mut positives: Vec<(usize, &Atom, usize)> = rule
        .body
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match l {
            Literal::Pos(a) => Some((i, a, estimate(i))),
            _ => None,
        })
        .collect();
    while !positives.is_empty() {
        let (pick, class) = positives
            .iter()
            .enumerate()
            .map(|(k, (i, a, n))| (k, atom_class(a, &bound), *n, *i))
            .min_by_key(|&(_, class, n, i)| (class.rank(), n, i))
            .map(|(k, class, _, _)| (k, class))
            .expect("nonempty");
        let (i, a, n) = positives.remove(pick);
        bound.extend(a.vars().cloned());
        steps.push(PlanStep {
            literal: i,
            class,
            negated: false,
            estimate: n,
        });
    }

    let mut binds: Vec<usize> = rule
        .body
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, Literal::Bind(_)))
        .map(|(i, _)| i)
        .collect();
    while !binds.is_empty() {
        let ready = binds.iter().position(|&i| match &rule.body[i] {
            Literal::Bind(b) => b.expr.vars().into_iter().all(|v| bound.contains(v)),
            _ => unreachable!(),
        });
        let Some(k) = ready else {
            return Err(plan_err(format!(
                "BIND at position {} can never have its inputs bound",
                binds[0] + 1
            )));
        };
        let i = binds.remove(k);
        if let Literal::Bind(b) = &rule.body[i] {
            bound.insert(b.target.clone());
        }
        steps.push(PlanStep {
            literal: i,
            class: HeuristicClass::Bind,
            negated: false,
            estimate: 0,
        });
    }

    for (i, lit) in rule.body.iter().enumerate() {
        if let Literal::Comp(c) = lit {
            if !is_bound(&c.left, &bound) || !is_bound(&c.right, &bound) {
                return Err(plan_err(format!(
                    "COMP at position {} compares an unbound variable",
                    i + 1
                )));
            }
            steps.push(PlanStep {
                literal: i,
                class: HeuristicClass::Comp,
                negated: false,
                estimate: 0,
            });
        }
    }

    let mut negatives: Vec<(usize, HeuristicClass, usize)> = rule
        .body
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match l {
            Literal::Neg(a) => Some((i, atom_class(a, &bound), estimate(i))),
            _ => None,
        })
        .collect();
    negatives.sort_by_key(|&(i, class, n)| (class.rank(), n, i));
    steps.extend(negatives.into_iter().map(|(i, class, n)| PlanStep {
        literal: i,
        class,
        negated: true,
        estimate: n,
    }));

    if rule.is_aggregate() {
        steps.push(PlanStep {
            literal: rule.body.len(),
            class: HeuristicClass::Aggregation,
            negated: false,
            estimate: 0,
        });
    }
    Ok(JoinPlan {
        rule: rule.id.clone(),
        steps,
    })
}

/// Checks that `order` is a permutation of the body that binds every
/// builtin's and negation's inputs in time. Negated atoms may leave
/// variables unbound only if no other literal binds them.
pub fn is_legal_order(rule: &Rule, order: &[usize]) -> bool {
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..rule.body.len()).collect::<Vec<_>>() {
        return false;
    }
    let binders: HashSet<&Var> = rule
        .body
        .iter()
        .flat_map(|l| match l {
            Literal::Pos(a) => a.vars().collect::<Vec<_>>(),
            Literal::Bind(b) => vec![&b.target],
            _ => Vec::new(),
        })
        .collect();
    let mut bound: HashSet<Var> = HashSet::new();
    for &i in order {
        match &rule.body[i] {
            Literal::Pos(a) => bound.extend(a.vars().cloned()),
            Literal::Bind(b) => {
                if !b.expr.vars().into_iter().all(|v| bound.contains(v)) {
                    return false;
                }
                bound.insert(b.target.clone());
            }
            Literal::Comp(c) => {
                if !is_bound(&c.left, &bound) || !is_bound(&c.right, &bound) {
                    return false;
                }
            }
            Literal::Neg(a) => {
                if a.vars().any(|v| binders.contains(v) && !bound.contains(v)) {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_rule;

    #[test]
    fn comp_goes_after_atoms() {
        let r = parse_rule("r3: p11(X, Y) :- p11(X, Z) ∧ p11(Z, Y) ∧ COMP(X, !=, Y).").unwrap();
        let plan = plan_rule(&r, |_| 10, &[]).unwrap();
        assert_eq!(plan.order(), vec![0, 1, 2]);
        assert_eq!(plan.steps[1].class, HeuristicClass::SubjectBound);
        assert_eq!(plan.steps[2].class, HeuristicClass::Comp);
    }

    #[test]
    fn ground_atom_first() {
        let r = parse_rule("h(X, Y) :- q(X, Y) ∧ p(a, b).").unwrap();
        let plan = plan_rule(&r, |_| 5, &[]).unwrap();
        assert_eq!(plan.order(), vec![1, 0]);
        assert_eq!(plan.steps[0].class, HeuristicClass::BoundBound);
    }

    #[test]
    fn smaller_relation_breaks_ties() {
        let r = parse_rule("h(X, Y) :- p(X, Y) ∧ q(Z, W).").unwrap();
        let counts = [10, 3];
        let plan = plan_rule(&r, |i| counts[i], &[]).unwrap();
        assert_eq!(plan.order(), vec![1, 0]);
        let same = plan_rule(&r, |_| 7, &[]).unwrap();
        assert_eq!(same.order(), vec![0, 1]);
    }

    #[test]
    fn class_atoms_rank_below_free_atoms() {
        let r = parse_rule("h(X, Y) :- A(X) ∧ p(Z, Y) ∧ q(X, Z).").unwrap();
        let plan = plan_rule(&r, |_| 1, &[]).unwrap();
        // p first (free, source order), then q binds via Z, then A(X) is ground.
        assert_eq!(plan.order(), vec![1, 2, 0]);
        assert_eq!(plan.steps[2].class, HeuristicClass::BoundBound);
    }

    #[test]
    fn binds_in_dependency_order_then_negation_last() {
        let r = parse_rule(
            "h(X, E) :- p(X, Y) ∧ not n(X, E) ∧ COMP(E, >, 1) ∧ BIND(D * 2 AS E) ∧ BIND(Y + 1 AS D).",
        )
        .unwrap();
        let plan = plan_rule(&r, |_| 1, &[]).unwrap();
        assert_eq!(plan.order(), vec![0, 4, 3, 2, 1]);
        assert!(plan.steps[4].negated);
        assert!(is_legal_order(&r, &plan.order()));
        assert!(!is_legal_order(&r, &[0, 3, 4, 2, 1]));
    }

    #[test]
    fn cyclic_binds_cannot_be_planned() {
        let r = parse_rule("h(X, A) :- p(X, X) ∧ BIND(B AS A) ∧ BIND(A AS B).").unwrap();
        assert!(matches!(plan_rule(&r, |_| 1, &[]), Err(Error::Plan { .. })));
    }

    #[test]
    fn aggregation_step_is_last() {
        let r = parse_rule("c(X, N) :- AGGREGATE(nb(X, Y) ∧ t(Y, T)) ON X WITH COUNT(T) AS N.")
            .unwrap();
        let plan = plan_rule(&r, |_| 1, &[]).unwrap();
        assert_eq!(plan.steps.last().unwrap().class, HeuristicClass::Aggregation);
        assert_eq!(plan.order(), vec![0, 1]);
        assert!(plan.render(&r).contains("[Aggregation]"));
    }

    #[test]
    fn prebound_head_variables_promote_atoms() {
        let r = parse_rule("t(X, Y) :- t(X, Z) ∧ e(Z, Y).").unwrap();
        let plan = plan_rule(&r, |i| [100, 1][i], &[Var::new("X"), Var::new("Y")]).unwrap();
        assert_eq!(plan.steps[0].class, HeuristicClass::ObjectBound);
        assert_eq!(plan.order(), vec![1, 0]);
    }
}
