//! Packaged workloads: the wind-farm rule sets, seeded data generators for
//! the chain and multi-relation data sets, and oracle-checked scenarios
//! comparing incremental maintenance against rematerialization.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{Engine, UpdateReport};
use crate::error::Result;
use crate::model::{parse_rules, Const, Fact, Rule, RuleId};

/// Symmetric-transitive neighbourhood with temperature aggregation and an
/// anomaly detector.
pub const RS1: &str = "\
r1: hasNeighbour(X, Y) :- hasNeighbour(Y, X) .
r2: hasNeighbour(X, Y) :- hasNeighbour(X, Z) ∧ hasNeighbour(Z, Y) ∧ COMP(X, !=, Y) .
r3: hasNeighbourAirTemperatureMeasurementNumber(X, Z) :- aggregate( hasNeighbour(X, Y) ∧ hasAirTemperatureMesurement(Y, T)) on X with count(T) as Z .
r4: hasMedianAirTemperatureMeasurementNearby(X, Z) :- aggregate( hasNeighbour(X, Y) ∧ hasAirTemperatureMesurement(Y, T)) on X with Med(T) as Z .
r5: MoreThan3Neighbours(X) :- hasNeighbourAirTemperatureMeasurementNumber(X, N) ∧ Comp(N, >=, 3) .
r6: SensorAnomalyWindTurbine(X) :- hasMedianAirTemperatureMeasurementNearby(X, M) ∧ MoreThan3Neighbours(X) ∧ hasAirTemperatureMesurement(X, T) and bind(abs(T-M) as D) ∧ Comp(D,>,5).
";

const RS2_COMMON_HEAD: &str = "\
r1: p11(X, Y) :- p1(X, Y).
r2: p11(X, Y) :- p11(Y, X).
r3: p11(X, Y) :- p11(X, Z) ∧ p11(Z, Y) ∧ COMP(X,!=, Y).
r4: p12(X, Y) :- p2(X, Y).
r5: p12(X, Y) :- p12(X, Z) ∧ p12(Z, Y) ∧ COMP(X,!=, Y).
r6: p13(X, Y) :- p3(X, Y).
r7: p14(X, Y) :- p13(X, Y).
r8: p13(X, Y) :- p14(Y, X).
r9: p20(X, Y) :- p11(X, Y).
";

const RS2_COMMON_TAIL: &str = "\
r11: p20(X, Y) :- p13(X, Y).
r12: p21(X, Y) :- p20(X, Y).
r13: p22(X, Y) :- p21(X, Y).
r14: p20(X, Y) :- p22(X, Y).
r15: p25(X, Z) :- p11(X, Y) ∧ p12(Y, Z) ∧ not p5(Y, Z).
r16: p26(X, Z) :- p12(X, Y) ∧ p13(Z, Y) ∧ not p5(Z, Y).
r17: p30(X, Z) :- p22(X, Y) ∧ p21(Y, Z).
r18: p31(X, Y) :- p25(X, Y) ∧ p26(Y, Z).
";

/// Semipositive program: negation on an explicit predicate only.
pub fn rs2_text() -> String {
    format!("{RS2_COMMON_HEAD}r10: p20(X, Y) :- p12(X, Y).\n{RS2_COMMON_TAIL}")
}

/// The semipositive program with `r10` replaced by a rule negating a
/// derived predicate.
pub fn rs3_text() -> String {
    format!("{RS2_COMMON_HEAD}r10_new: p20(X, Y) :- p12(X, Y) ∧ not p13(Y, Z).\n{RS2_COMMON_TAIL}")
}

/// Small program with the dependency shape of the introductory example:
/// `{r2,r3,r4}` recursive, `r5` negating `c`, `{r6,r7}` recursive below.
pub const RUNNING_EXAMPLE: &str = "\
r1: a(X, Y) :- e(X, Y).
r2: b(X, Y) :- d(Y, X).
r3: c(X, Y) :- b(X, Y).
r4: d(X, Z) :- c(X, Y) ∧ a(Y, Z).
r5: f(X, Y) :- e(X, Y) ∧ not c(X, Y).
r6: g(X, Y) :- b(X, Z) ∧ h(Z, Y).
r7: h(X, Y) :- f(X, Y) ∧ g(Y, X).
";

/// Rule inserted into the running example; it joins the node of `r2`.
pub const RUNNING_EXAMPLE_R8: &str = "r8: b(X, Z) :- c(X, Y) and b(Y, Z).";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleSet {
    Rs1,
    Rs2,
    Rs3,
}

impl RuleSet {
    pub fn name(self) -> &'static str {
        match self {
            RuleSet::Rs1 => "rs1",
            RuleSet::Rs2 => "rs2",
            RuleSet::Rs3 => "rs3",
        }
    }

    pub fn parse_name(s: &str) -> Option<RuleSet> {
        match s.to_ascii_lowercase().as_str() {
            "rs1" => Some(RuleSet::Rs1),
            "rs2" => Some(RuleSet::Rs2),
            "rs3" => Some(RuleSet::Rs3),
            _ => None,
        }
    }

    pub fn text(self) -> String {
        match self {
            RuleSet::Rs1 => RS1.to_string(),
            RuleSet::Rs2 => rs2_text(),
            RuleSet::Rs3 => rs3_text(),
        }
    }

    pub fn rules(self) -> Vec<Rule> {
        parse_rules(&self.text()).expect("packaged rule sets parse")
    }
}

pub const HAS_NEIGHBOUR: &str = "hasNeighbour";
pub const HAS_TEMPERATURE: &str = "hasAirTemperatureMesurement";
pub const ANOMALY_CLASS: &str = "SensorAnomalyWindTurbine";

pub fn turbine(i: usize) -> String {
    format!("windTurbine{i}")
}

/// Chain data set: turbines `1..=n`, each linked to its successor, each
/// with one temperature reading near 20.0. The anomalous turbine, if any,
/// reads 30.0.
pub fn chain_ds1(n: usize, seed: u64, anomalous: Option<usize>) -> Vec<Fact> {
    chain_segment(1, n, seed, anomalous)
}

/// Turbines `first..=last`, linked consecutively, plus a link from
/// `first - 1` when `first > 1`. Readings depend only on the seed and the
/// turbine index, so segments compose into the same data as one chain.
pub fn chain_segment(first: usize, last: usize, seed: u64, anomalous: Option<usize>) -> Vec<Fact> {
    let mut facts = Vec::new();
    let link = |i: usize| Fact::iri(HAS_NEIGHBOUR, &turbine(i), &turbine(i + 1));
    if first > 1 && first <= last {
        facts.push(link(first - 1));
    }
    for i in first..last {
        facts.push(link(i));
    }
    for i in first..=last {
        facts.push(temperature_fact(i, temperature(seed, i, anomalous)));
    }
    facts
}

pub fn temperature(seed: u64, i: usize, anomalous: Option<usize>) -> f64 {
    if anomalous == Some(i) {
        return 30.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let tenths: i32 = rng.gen_range(-5..=5);
    20.0 + f64::from(tenths) / 10.0
}

pub fn temperature_fact(i: usize, value: f64) -> Fact {
    Fact::new(
        Const::iri(HAS_TEMPERATURE),
        Const::iri(&turbine(i)),
        Const::number(value).expect("finite reading"),
    )
}

/// Edge counts for the multi-relation data set, per entity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ds2Params {
    /// Random `p1` pairs (symmetric-transitive under `r2`/`r3`).
    pub p1: f64,
    /// Forward `p2` edges spanning at most `p2_span` entities (transitive
    /// under `r5`).
    pub p2: f64,
    pub p2_span: usize,
    /// Random `p3` pairs.
    pub p3: f64,
    pub p4: f64,
    /// Fraction of `p2` and `p3` edges copied into `p5`, the negated
    /// predicate.
    pub p5_shadow: f64,
    /// Extra random `p5` pairs.
    pub p5: f64,
}

impl Default for Ds2Params {
    fn default() -> Self {
        Ds2Params {
            p1: 0.55,
            p2: 1.0,
            p2_span: 4,
            p3: 0.5,
            p4: 0.1,
            p5_shadow: 0.2,
            p5: 0.1,
        }
    }
}

/// Multi-relation data set over entities `1..=n`.
pub fn multirel_ds2(n: usize, seed: u64, params: &Ds2Params) -> Vec<Fact> {
    assert!(n >= 2, "need at least two entities");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = |ratio: f64| (ratio * n as f64).round() as usize;
    let mut facts = Vec::new();
    let random_pairs = |rng: &mut ChaCha8Rng, pred: &str, k: usize, out: &mut Vec<Fact>| {
        let mut pairs = Vec::with_capacity(k);
        for _ in 0..k {
            let a = rng.gen_range(1..=n);
            let mut b = rng.gen_range(1..n);
            if b >= a {
                b += 1;
            }
            pairs.push((a, b));
            out.push(Fact::iri(pred, &turbine(a), &turbine(b)));
        }
        pairs
    };
    random_pairs(&mut rng, "p1", count(params.p1), &mut facts);
    let mut p2 = Vec::new();
    for _ in 0..count(params.p2) {
        let a = rng.gen_range(1..n);
        let b = (a + rng.gen_range(1..=params.p2_span.max(1))).min(n);
        p2.push((a, b));
        facts.push(Fact::iri("p2", &turbine(a), &turbine(b)));
    }
    let p3 = random_pairs(&mut rng, "p3", count(params.p3), &mut facts);
    random_pairs(&mut rng, "p4", count(params.p4), &mut facts);
    for &(a, b) in p2.iter().chain(&p3) {
        if rng.gen_bool(params.p5_shadow) {
            facts.push(Fact::iri("p5", &turbine(a), &turbine(b)));
        }
    }
    random_pairs(&mut rng, "p5", count(params.p5), &mut facts);
    facts.sort_by_cached_key(Fact::to_ntriples);
    facts.dedup();
    facts
}

/// One oracle-checked update.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub label: String,
    pub incremental: Duration,
    pub scratch: Duration,
    pub report: Option<UpdateReport>,
    /// Derived by the maintained engine but not by rematerialization.
    pub extra: Vec<Fact>,
    /// Derived by rematerialization but missing from the maintained engine.
    pub missing: Vec<Fact>,
    /// Evaluations counted in nodes outside the update's plan.
    pub outside_plan: u64,
    pub idb_len: usize,
}

impl StepOutcome {
    pub fn equal(&self) -> bool {
        self.extra.is_empty() && self.missing.is_empty()
    }

    pub fn evaluations(&self) -> u64 {
        self.report.as_ref().map_or(0, UpdateReport::evaluations)
    }

    pub fn diff_size(&self) -> usize {
        self.report
            .as_ref()
            .map_or(0, |r| r.idb_added() + r.idb_removed())
    }

    pub fn summary(&self) -> String {
        let verdict = if self.equal() { "PASS" } else { "FAIL" };
        format!(
            "{verdict} {} incremental_ms={:.3} scratch_ms={:.3} idb={} diff={} evals={} outside_plan={}{}",
            self.label,
            self.incremental.as_secs_f64() * 1e3,
            self.scratch.as_secs_f64() * 1e3,
            self.idb_len,
            self.diff_size(),
            self.evaluations(),
            self.outside_plan,
            if self.equal() {
                String::new()
            } else {
                format!(" extra={:?} missing={:?}", head(&self.extra), head(&self.missing))
            }
        )
    }
}

fn head(facts: &[Fact]) -> Vec<String> {
    facts.iter().take(5).map(|f| f.to_string()).collect()
}

/// Applies `update` to a materialized engine and compares the result with
/// rematerializing the updated program.
pub fn oracle_step(
    engine: &mut Engine,
    label: impl Into<String>,
    update: impl FnOnce(&mut Engine) -> Result<UpdateReport>,
) -> Result<StepOutcome> {
    engine.reset_counters();
    let start = Instant::now();
    let report = update(engine)?;
    let incremental = start.elapsed();
    let outside_plan = engine
        .counters()
        .iter()
        .filter(|(n, _)| !report.plan.contains(n))
        .map(|(_, s)| s.evaluations)
        .sum();
    let start = Instant::now();
    let fresh = engine.rematerialized()?;
    let scratch = start.elapsed();
    let (extra, missing) = engine.idb_mismatch(&fresh);
    Ok(StepOutcome {
        label: label.into(),
        incremental,
        scratch,
        report: Some(report),
        extra,
        missing,
        outside_plan,
        idb_len: engine.idb_len(),
    })
}

fn split_rules(rules: Vec<Rule>, held: &[RuleId]) -> (Vec<Rule>, Vec<Rule>) {
    rules.into_iter().partition(|r| !held.contains(&r.id))
}

/// Materializes `rules ∖ ids` over `facts`, then inserts `ids`.
pub fn insert_scenario(rules: Vec<Rule>, facts: &[Fact], ids: &[RuleId]) -> Result<StepOutcome> {
    let (base, added) = split_rules(rules, ids);
    let mut engine = Engine::with_program(base, facts.iter().copied())?;
    let label = format!("insert {}", join_ids(ids));
    oracle_step(&mut engine, label, |e| e.insert_rules(added))
}

/// Materializes `rules` over `facts`, then deletes `ids`.
pub fn delete_scenario(rules: Vec<Rule>, facts: &[Fact], ids: &[RuleId]) -> Result<StepOutcome> {
    let mut engine = Engine::with_program(rules, facts.iter().copied())?;
    let label = format!("delete {}", join_ids(ids));
    oracle_step(&mut engine, label, |e| e.delete_rules(ids))
}

fn join_ids(ids: &[RuleId]) -> String {
    ids.iter().map(RuleId::as_str).collect::<Vec<_>>().join("+")
}

/// Derived neighbour count and time for one chain size.
#[derive(Clone, Debug)]
pub struct ScalePoint {
    pub n: usize,
    pub neighbours: usize,
    pub elapsed: Duration,
}

/// Materializes the symmetric and transitive rules of RS1 over chains of
/// each size.
pub fn rs1_scale(sizes: &[usize], seed: u64) -> Result<Vec<ScalePoint>> {
    let closure: Vec<Rule> = RuleSet::Rs1
        .rules()
        .into_iter()
        .filter(|r| matches!(r.id.as_str(), "r1" | "r2"))
        .collect();
    let pred = Const::iri(HAS_NEIGHBOUR);
    sizes
        .iter()
        .map(|&n| {
            let mut e = Engine::new();
            e.insert_rules(closure.clone())?;
            e.insert_facts(chain_ds1(n, seed, None))?;
            let start = Instant::now();
            e.materialize()?;
            let elapsed = start.elapsed();
            let neighbours = e.query(&crate::storage::Pattern::any(pred)).len();
            Ok(ScalePoint {
                n,
                neighbours,
                elapsed,
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let num: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    num / den
}

/// Insert-then-delete of extra turbines appended to an RS1 chain.
#[derive(Clone, Debug)]
pub struct DataRound {
    pub extra: usize,
    pub insert: StepOutcome,
    pub delete: StepOutcome,
}

pub fn rs1_data_incremental(n: usize, percents: &[usize], seed: u64) -> Result<Vec<DataRound>> {
    let mut engine = Engine::with_program(RuleSet::Rs1.rules(), chain_ds1(n, seed, None))?;
    let mut rounds = Vec::new();
    for &pct in percents {
        let extra = n * pct / 100;
        let facts = chain_segment(n + 1, n + extra, seed, None);
        let insert = oracle_step(&mut engine, format!("insert {extra} turbines"), |e| {
            e.insert_facts(facts.iter().copied())
        })?;
        let delete = oracle_step(&mut engine, format!("delete {extra} turbines"), |e| {
            e.delete_facts(facts.iter().copied())
        })?;
        rounds.push(DataRound {
            extra,
            insert,
            delete,
        });
    }
    Ok(rounds)
}

/// Turbines classified as anomalous.
pub fn anomalies(engine: &Engine) -> Vec<String> {
    let pat = crate::storage::Pattern::new(Const::rdf_type(), None, Some(Const::iri(ANOMALY_CLASS)));
    let mut out: Vec<String> = engine.query(&pat).iter().map(|f| f.s.to_string()).collect();
    out.sort();
    out
}

/// Default data for the multi-relation scenarios.
pub fn ds2(n: usize, seed: u64) -> Vec<Fact> {
    multirel_ds2(n, seed, &Ds2Params::default())
}

/// Randomly picks `k` distinct elements.
pub fn sample<T: Clone>(items: &[T], k: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.choose_multiple(&mut rng, k).cloned().collect()
}
