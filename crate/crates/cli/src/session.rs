use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use edgelog::storage::sorted_ntriples;
use edgelog::workload::{chain_ds1, multirel_ds2, Ds2Params};
use edgelog::{parse_facts, parse_rules, Const, ConstValue, Engine, Error, Fact, MaterializeReport, RuleId, UpdateReport};

use crate::pattern::parse_pattern;
use crate::{bench, Command, Densities, Format, Generator, GraphKind, LoadKind, Options, Which};

/// Severity of a failed command, ordered so the worst one wins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Failure {
    None,
    User,
    Internal,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad input: syntax, unsafe programs, unknown ids, unreadable files.
    User(String),
    /// An invariant of the engine or a benchmark oracle did not hold.
    Internal(String),
}

impl CliError {
    pub fn failure(&self) -> Failure {
        match self {
            CliError::User(_) => Failure::User,
            CliError::Internal(_) => Failure::Internal,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::User(m) => f.write_str(m),
            CliError::Internal(m) => write!(f, "invariant violated: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::User(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

fn in_file(path: &Path, e: Error) -> CliError {
    match e {
        Error::Syntax {
            line,
            column,
            message,
        } => CliError::User(format!("{}:{line}:{column}: {message}", path.display())),
        other => CliError::User(format!("{}: {other}", path.display())),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

pub fn render_fact(f: &Fact, format: Format) -> String {
    match format {
        Format::Nt => f.to_ntriples(),
        Format::Dl => format!("{f}."),
    }
}

pub fn render_facts(facts: impl Iterator<Item = Fact>, format: Format) -> Vec<String> {
    match format {
        Format::Nt => sorted_ntriples(facts),
        Format::Dl => {
            let mut lines: Vec<String> = facts.map(|f| render_fact(&f, format)).collect();
            lines.sort();
            lines
        }
    }
}

/// Predicate label for counting: the class for type facts.
fn label(f: &Fact) -> String {
    let c = if f.p == Const::rdf_type() { f.o } else { f.p };
    match c.value() {
        ConstValue::Iri(s) => s.to_string(),
        _ => c.to_string(),
    }
}

pub struct Session {
    opts: Options,
    engine: Engine,
    history: Vec<String>,
}

impl Session {
    pub fn new(opts: Options) -> Session {
        Session {
            opts,
            engine: Engine::new(),
            history: Vec::new(),
        }
    }

    pub fn history(&self) -> &[String] {
        &self.history
    }

    pub fn record(&mut self, line: &str) {
        if !line.is_empty() {
            self.history.push(line.to_string());
        }
    }

    /// Loads the files named by `--rules` and `--facts`.
    pub fn preload(&mut self) -> CliResult {
        let mut sink = std::io::sink();
        for path in self.opts.rules.clone() {
            self.load_rules(&path, &mut sink)?;
        }
        for path in self.opts.facts.clone() {
            self.load_facts(&path, &mut sink)?;
        }
        Ok(())
    }

    pub fn execute(&mut self, command: &Command, out: &mut dyn Write) -> CliResult {
        // `stats` reports the counters left by the previous command.
        if !self.opts.cumulative && !matches!(command, Command::Stats) {
            self.engine.reset_counters();
        }
        match command {
            Command::Load { kind, paths } => {
                for path in paths {
                    match kind {
                        LoadKind::Rules => self.load_rules(path, out)?,
                        LoadKind::Facts => self.load_facts(path, out)?,
                    }
                }
                Ok(())
            }
            Command::Materialize => self.materialize(out),
            Command::AddRule { text } => {
                let rules = parse_rules(text)?;
                if rules.is_empty() {
                    return Err(CliError::User("no rule given".into()));
                }
                self.update(out, |e| e.insert_rules(rules))
            }
            Command::DelRule { ids } => {
                let ids: Vec<RuleId> = ids.iter().map(|s| RuleId::new(s)).collect();
                self.update(out, |e| e.delete_rules(&ids))
            }
            Command::AddFact { facts } => {
                let facts = parse_facts(facts)?;
                self.update(out, |e| e.insert_facts(facts))
            }
            Command::DelFact { facts } => {
                let facts = parse_facts(facts)?;
                self.update(out, |e| e.delete_facts(facts))
            }
            Command::Query { pattern } => {
                let pat = parse_pattern(pattern).map_err(CliError::User)?;
                self.ensure_materialized()?;
                let found = self.engine.query(&pat);
                for line in render_facts(found.iter().copied(), self.opts.format) {
                    writeln!(out, "{line}")?;
                }
                eprintln!("{} results", found.len());
                Ok(())
            }
            Command::Dump { which, out: path } => {
                if *which != Which::Edb {
                    self.ensure_materialized()?;
                }
                let facts: Vec<Fact> = match which {
                    Which::Idb => self.engine.idb_facts().into_iter().collect(),
                    Which::Edb => self.engine.edb().facts().collect(),
                    Which::All => self.engine.all_facts().into_iter().collect(),
                };
                let mut text = render_facts(facts.into_iter(), self.opts.format).join("\n");
                if !text.is_empty() {
                    text.push('\n');
                }
                emit(path.as_deref(), &text, out)
            }
            Command::ExportGraph { graph, out: path } => {
                let dot = match graph {
                    GraphKind::Rules => self.engine.rdg().to_dot(),
                    GraphKind::Hyper => self.engine.hrdg().to_dot(),
                };
                emit(path.as_deref(), &dot, out)
            }
            Command::Generate {
                kind,
                n,
                out: path,
                anomalous,
                densities,
            } => self.generate(*kind, *n, path.as_deref(), *anomalous, densities, out),
            Command::Bench {
                scenario,
                n,
                sizes,
                percents,
            } => bench::run(scenario, *n, sizes, percents, self.opts.seed, out),
            Command::Stats => self.stats(out),
            Command::Repl => Err(CliError::User("already reading commands".into())),
        }
    }

    fn load_rules(&mut self, path: &Path, out: &mut dyn Write) -> CliResult {
        let rules = parse_rules(&read(path)?).map_err(|e| in_file(path, e))?;
        let count = rules.len();
        if self.engine.is_materialized() && count > 0 {
            self.update(out, |e| e.insert_rules(rules))?;
        } else {
            self.engine.insert_rules(rules).map_err(|e| in_file(path, e))?;
        }
        let h = self.engine.hrdg();
        let aggregates = h
            .nodes
            .iter()
            .filter(|n| n.rules().iter().any(|r| self.engine.rule(r).is_some_and(|r| r.is_aggregate())))
            .count();
        write!(
            out,
            "{}: {count} rules; program has {} rules, {} hyper-nodes",
            path.display(),
            self.engine.rule_count(),
            h.nodes.len()
        )?;
        if aggregates > 0 {
            write!(out, ", {aggregates} with aggregates")?;
        }
        writeln!(out)?;
        Ok(())
    }

    fn load_facts(&mut self, path: &Path, out: &mut dyn Write) -> CliResult {
        let facts = parse_facts(&read(path)?).map_err(|e| in_file(path, e))?;
        let count = facts.len();
        if self.engine.is_materialized() {
            self.update(out, |e| e.insert_facts(facts))?;
        } else {
            self.engine.insert_facts(facts)?;
        }
        writeln!(out, "{}: {count} facts; {} explicit facts", path.display(), self.engine.edb().len())?;
        Ok(())
    }

    fn ensure_materialized(&mut self) -> CliResult<Option<MaterializeReport>> {
        if self.engine.is_materialized() {
            return Ok(None);
        }
        Ok(Some(self.engine.materialize()?))
    }

    fn materialize(&mut self, out: &mut dyn Write) -> CliResult {
        let report = self.engine.materialize()?;
        writeln!(
            out,
            "materialized {} nodes: {} derived in {:.3} ms",
            report.order.len(),
            report.derived(),
            report.elapsed.as_secs_f64() * 1e3
        )?;
        for node in &report.order {
            let (derived, stats) = &report.nodes[node];
            writeln!(
                out,
                "  {node}: {derived} derived, {} evals, {} rounds",
                stats.evaluations, stats.iterations
            )?;
        }
        let mut by_pred: BTreeMap<String, usize> = BTreeMap::new();
        for f in self.engine.idb_facts() {
            *by_pred.entry(label(&f)).or_default() += 1;
        }
        for (p, n) in by_pred {
            writeln!(out, "  {p}: {n}")?;
        }
        self.log(&format!(
            "update=materialize nodes={} derived={} ms={:.3}",
            report.order.len(),
            report.derived(),
            report.elapsed.as_secs_f64() * 1e3
        ))?;
        self.diagnostics(out)
    }

    fn update(&mut self, out: &mut dyn Write, apply: impl FnOnce(&mut Engine) -> edgelog::Result<UpdateReport>) -> CliResult {
        if self.ensure_materialized()?.is_some() && !self.opts.cumulative {
            self.engine.reset_counters();
        }
        let report = apply(&mut self.engine)?;
        let line = report.to_string();
        writeln!(out, "{line}")?;
        self.log(&line)?;
        self.diagnostics(out)
    }

    /// `--explain-plan` and `--trace-fixpoint` output.
    fn diagnostics(&self, out: &mut dyn Write) -> CliResult {
        if self.opts.explain_plan {
            for (plan, rule) in self.engine.explain()? {
                writeln!(out, "plan {}", plan.render(&rule))?;
            }
        }
        if self.opts.trace_fixpoint {
            for (node, stats) in self.engine.counters() {
                if stats.iterations > 0 || !stats.deltas.is_empty() {
                    let deltas: Vec<String> = stats.deltas.iter().map(usize::to_string).collect();
                    writeln!(out, "trace {node}: rounds={} deltas=[{}]", stats.iterations, deltas.join(" "))?;
                }
            }
        }
        Ok(())
    }

    fn log(&self, line: &str) -> CliResult {
        if let Some(path) = &self.opts.log {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{line}")?;
        }
        Ok(())
    }

    fn generate(
        &self,
        kind: Generator,
        n: usize,
        path: Option<&Path>,
        anomalous: Option<usize>,
        densities: &Densities,
        out: &mut dyn Write,
    ) -> CliResult {
        if n < 2 {
            return Err(CliError::User("n must be at least 2".into()));
        }
        let facts = match kind {
            Generator::ChainDs1 => {
                if anomalous.is_some_and(|a| a == 0 || a > n) {
                    return Err(CliError::User(format!("anomalous turbine must lie in 1..={n}")));
                }
                chain_ds1(n, self.opts.seed, anomalous)
            }
            Generator::MultirelDs2 => {
                let d = Ds2Params::default();
                let params = Ds2Params {
                    p1: densities.p1.unwrap_or(d.p1),
                    p2: densities.p2.unwrap_or(d.p2),
                    p2_span: densities.p2_span.unwrap_or(d.p2_span),
                    p3: densities.p3.unwrap_or(d.p3),
                    p4: densities.p4.unwrap_or(d.p4),
                    p5_shadow: densities.p5_shadow.unwrap_or(d.p5_shadow),
                    p5: densities.p5.unwrap_or(d.p5),
                };
                let ratios = [params.p1, params.p2, params.p3, params.p4, params.p5];
                if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || !(0.0..=1.0).contains(&params.p5_shadow) {
                    return Err(CliError::User("densities must be non-negative, p5-shadow at most 1".into()));
                }
                multirel_ds2(n, self.opts.seed, &params)
            }
        };
        // Generator order is deterministic; keep it so files diff cleanly.
        let mut text = String::new();
        for f in &facts {
            text.push_str(&render_fact(f, self.opts.format));
            text.push('\n');
        }
        emit(path, &text, out)?;
        if path.is_some() {
            writeln!(out, "{} facts", facts.len())?;
        }
        Ok(())
    }

    fn stats(&self, out: &mut dyn Write) -> CliResult {
        let e = &self.engine;
        writeln!(out, "rules: {}", e.rule_count())?;
        writeln!(out, "hyper-nodes: {}", e.hrdg().nodes.len())?;
        writeln!(out, "explicit facts: {}", e.edb().len())?;
        writeln!(out, "materialized: {}", e.is_materialized())?;
        if e.is_materialized() {
            writeln!(out, "derived facts: {}", e.idb_len())?;
        }
        writeln!(out, "commands: {}", self.history.len())?;
        for (node, s) in e.counters() {
            if s.evaluations > 0 {
                writeln!(
                    out,
                    "  {node}: {} evals, {} rounds, +{} derived, {} overdeleted, {} rederived",
                    s.evaluations, s.iterations, s.derived, s.overdeleted, s.rederived
                )?;
            }
        }
        let mut broken: Vec<String> = Vec::new();
        if !e.edb().check_invariants() {
            broken.push("explicit store".into());
        }
        for node in &e.hrdg().nodes {
            if e.node_store(node).is_some_and(|s| !s.check_invariants()) {
                broken.push(node.to_string());
            }
        }
        if broken.is_empty() {
            Ok(())
        } else {
            Err(CliError::Internal(format!("index mismatch in {}", broken.join(", "))))
        }
    }
}

fn emit(path: Option<&Path>, text: &str, out: &mut dyn Write) -> CliResult {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::User(format!("{}: {e}", p.display()))),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}
