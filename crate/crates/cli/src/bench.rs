use std::io::Write;

use edgelog::workload::{
    delete_scenario, ds2, insert_scenario, log_log_slope, rs1_data_incremental, rs1_scale, RuleSet, StepOutcome,
};
use edgelog::RuleId;

use crate::session::{CliError, CliResult};

const SCENARIOS: &str = "rs1-scale, rs1-data, rule-suite, rs2-insert-<ids>, rs2-delete-<ids>, rs3-insert-<ids>, rs3-delete-<ids>";

/// Runs a scenario; any oracle mismatch is an internal failure.
pub fn run(
    scenario: &str,
    n: Option<usize>,
    sizes: &[usize],
    percents: &[usize],
    seed: u64,
    out: &mut dyn Write,
) -> CliResult {
    let failures = match scenario {
        "rs1-scale" => scale(if sizes.is_empty() { &[50, 100, 150, 200] } else { sizes }, seed, out)?,
        "rs1-data" => {
            let percents = if percents.is_empty() { &[10, 20, 30, 40, 50][..] } else { percents };
            data(n.unwrap_or(200), percents, seed, out)?
        }
        "rule-suite" => suite(n.unwrap_or(100), seed, out)?,
        _ => {
            let (set, insert, ids) = parse_rule_scenario(scenario)?;
            let facts = ds2(n.unwrap_or(100), seed);
            let outcome = if insert {
                insert_scenario(set.rules(), &facts, &ids)?
            } else {
                delete_scenario(set.rules(), &facts, &ids)?
            };
            report(&outcome, out)?;
            usize::from(!outcome.equal())
        }
    };
    if failures > 0 {
        return Err(CliError::Internal(format!("{failures} step(s) differ from rematerialization")));
    }
    Ok(())
}

fn report(o: &StepOutcome, out: &mut dyn Write) -> CliResult {
    writeln!(out, "{}", o.summary())?;
    if let Some(r) = &o.report {
        writeln!(out, "  {r}")?;
    }
    Ok(())
}

/// `rs3-delete-r6,r10` and the like. `r10` names `r10_new` where only the
/// latter exists.
fn parse_rule_scenario(name: &str) -> CliResult<(RuleSet, bool, Vec<RuleId>)> {
    let unknown = || CliError::User(format!("unknown scenario '{name}'; expected one of {SCENARIOS}"));
    let mut parts = name.splitn(3, '-');
    let (Some(set), Some(dir), Some(ids)) = (parts.next(), parts.next(), parts.next()) else {
        return Err(unknown());
    };
    let set = RuleSet::parse_name(set).filter(|s| *s != RuleSet::Rs1).ok_or_else(unknown)?;
    let insert = match dir {
        "insert" => true,
        "delete" => false,
        _ => return Err(unknown()),
    };
    let known: Vec<RuleId> = set.rules().into_iter().map(|r| r.id).collect();
    let ids = ids
        .split(',')
        .map(|id| {
            let direct = RuleId::new(id);
            let alias = RuleId::new(&format!("{id}_new"));
            if known.contains(&direct) {
                Ok(direct)
            } else if known.contains(&alias) {
                Ok(alias)
            } else {
                Err(CliError::User(format!("{} has no rule {id}", set.name())))
            }
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((set, insert, ids))
}

fn scale(sizes: &[usize], seed: u64, out: &mut dyn Write) -> CliResult<usize> {
    if sizes.iter().any(|&n| n < 2) {
        return Err(CliError::User("chain sizes must be at least 2".into()));
    }
    let points = rs1_scale(sizes, seed)?;
    let mut failures = 0;
    writeln!(out, "{:>6} {:>10} {:>10} {:>10}", "n", "derived", "n(n-1)", "ms")?;
    for p in &points {
        let expected = p.n * (p.n - 1);
        failures += usize::from(p.neighbours != expected);
        writeln!(
            out,
            "{:>6} {:>10} {:>10} {:>10.2} {}",
            p.n,
            p.neighbours,
            expected,
            p.elapsed.as_secs_f64() * 1e3,
            if p.neighbours == expected { "PASS" } else { "FAIL" }
        )?;
    }
    if points.len() >= 2 {
        let counts: Vec<(f64, f64)> = points.iter().map(|p| (p.n as f64, p.neighbours as f64)).collect();
        let times: Vec<(f64, f64)> = points
            .iter()
            .map(|p| (p.n as f64, p.elapsed.as_secs_f64().max(1e-6)))
            .collect();
        writeln!(
            out,
            "log-log slope: derived {:.3}, time {:.3}",
            log_log_slope(&counts),
            log_log_slope(&times)
        )?;
    }
    Ok(failures)
}

fn data(n: usize, percents: &[usize], seed: u64, out: &mut dyn Write) -> CliResult<usize> {
    if n < 2 {
        return Err(CliError::User("n must be at least 2".into()));
    }
    let mut failures = 0;
    for round in rs1_data_incremental(n, percents, seed)? {
        for step in [&round.insert, &round.delete] {
            failures += usize::from(!step.equal());
            report(step, out)?;
        }
    }
    Ok(failures)
}

fn suite(n: usize, seed: u64, out: &mut dyn Write) -> CliResult<usize> {
    let facts = ds2(n, seed);
    let mut failures = 0;
    for set in [RuleSet::Rs2, RuleSet::Rs3] {
        for r in set.rules() {
            let ids = [r.id.clone()];
            for o in [
                insert_scenario(set.rules(), &facts, &ids)?,
                delete_scenario(set.rules(), &facts, &ids)?,
            ] {
                failures += usize::from(!o.equal());
                writeln!(out, "{} {}", set.name(), o.summary())?;
            }
        }
    }
    Ok(failures)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_names() {
        let (set, insert, ids) = parse_rule_scenario("rs3-delete-r10").unwrap();
        assert_eq!((set, insert), (RuleSet::Rs3, false));
        assert_eq!(ids, vec![RuleId::new("r10_new")]);
        let (_, insert, ids) = parse_rule_scenario("rs2-insert-r16,r17,r18").unwrap();
        assert!(insert);
        assert_eq!(ids.len(), 3);
        assert!(parse_rule_scenario("rs2-insert-r99").is_err());
        assert!(parse_rule_scenario("rs1-insert-r1").is_err());
        assert!(parse_rule_scenario("rs2-move-r1").is_err());
    }
}
