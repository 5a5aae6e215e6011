use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use edgelog::workload::{RuleSet, RUNNING_EXAMPLE};
use edgelog::{parse_facts, parse_rules, Fact};
use tempfile::TempDir;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn rules_file(name: &str) -> PathBuf {
    root().join("rules").join(name)
}

fn edgelog(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_edgelog"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str], stdin: &str) -> String {
    let o = edgelog(args, stdin);
    assert_eq!(o.status.code(), Some(0), "stdout:\n{}\nstderr:\n{}", stdout(&o), stderr(&o));
    stdout(&o)
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn generate(dir: &TempDir, args: &[&str], name: &str) -> String {
    let path = dir.path().join(name).to_string_lossy().into_owned();
    let mut all = vec!["generate"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["-o", &path]);
    ok(&all, "");
    path
}

fn line_count(text: &str, needle: &str) -> usize {
    text.lines().filter(|l| l.contains(needle)).count()
}

#[test]
fn rule_files_match_packaged_sets() {
    for set in [RuleSet::Rs1, RuleSet::Rs2, RuleSet::Rs3] {
        let file = fs::read_to_string(rules_file(&format!("{}.dl", set.name()))).unwrap();
        let from_file: Vec<String> = parse_rules(&file).unwrap().iter().map(|r| r.to_string()).collect();
        let packaged: Vec<String> = set.rules().iter().map(|r| r.to_string()).collect();
        assert_eq!(from_file, packaged, "{}", set.name());
    }
}

#[test]
fn load_reports_structure() {
    let rs2 = rules_file("rs2.dl");
    let out = ok(&["load", "rules", rs2.to_str().unwrap()], "");
    assert!(out.contains("program has 18 rules, 14 hyper-nodes"), "{out}");
    let rs3 = rules_file("rs3.dl");
    let out = ok(&["load", "rules", rs3.to_str().unwrap()], "");
    assert!(out.contains("program has 18 rules, 14 hyper-nodes"), "{out}");
    let rs1 = rules_file("rs1.dl");
    let out = ok(&["load", "rules", rs1.to_str().unwrap()], "");
    assert!(out.contains("program has 6 rules, 5 hyper-nodes, 2 with aggregates"), "{out}");

    let dir = TempDir::new().unwrap();
    let empty = write(&dir, "empty.dl", "");
    let out = ok(&["load", "rules", &empty], "");
    assert!(out.contains("0 rules"), "{out}");
}

#[test]
fn load_errors_name_file_and_line() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.dl", "r1: p(X, Y) :- q(X, Y).\n\nr2: p(X, Y) :- q(X, .\n");
    let o = edgelog(&["load", "rules", &bad], "");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.dl:3:"), "{}", stderr(&o));

    let cyclic = write(&dir, "cyclic.dl", "r1: p(X, Y) :- e(X, Y) ∧ not q(X, Y).\nr2: q(X, Y) :- p(X, Y).\n");
    let o = edgelog(&["load", "rules", &cyclic], "");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unsafe program"), "{}", stderr(&o));

    let o = edgelog(&["load", "facts", "/nonexistent/facts.nt"], "");
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn generators_follow_closed_forms() {
    let dir = TempDir::new().unwrap();
    let small = generate(&dir, &["chain-ds1", "--n", "3"], "c3.nt");
    let facts = parse_facts(&fs::read_to_string(&small).unwrap()).unwrap();
    let neighbour = |f: &&Fact| f.p.to_string() == "hasNeighbour";
    assert_eq!(facts.iter().filter(neighbour).count(), 2);
    assert_eq!(facts.len(), 5);

    let big = generate(&dir, &["chain-ds1", "--n", "400"], "c400.nt");
    let facts = parse_facts(&fs::read_to_string(&big).unwrap()).unwrap();
    assert_eq!(facts.iter().filter(neighbour).count(), 399);

    let o = edgelog(&["generate", "chain-ds1", "--n", "1"], "");
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ds2_generator_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = fs::read(generate(&dir, &["multirel-ds2", "--n", "100"], "a.nt")).unwrap();
    let b = fs::read(generate(&dir, &["multirel-ds2", "--n", "100"], "b.nt")).unwrap();
    let c = fs::read(generate(&dir, &["multirel-ds2", "--n", "100", "--seed", "21"], "c.nt")).unwrap();
    let dense = fs::read(generate(&dir, &["multirel-ds2", "--n", "100", "--p4", "2.0"], "d.nt")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(dense.len() > a.len());
    let text = String::from_utf8(a).unwrap();
    for p in ["p1", "p2", "p3", "p4", "p5"] {
        assert!(text.contains(&format!("<{p}>")), "missing {p}");
    }
}

#[test]
fn materialize_reports_closure_size() {
    let dir = TempDir::new().unwrap();
    let chain = generate(&dir, &["chain-ds1", "--n", "50"], "c.nt");
    let rs1 = rules_file("rs1.dl");
    let out = ok(&["--rules", rs1.to_str().unwrap(), "--facts", &chain, "materialize"], "");
    assert!(out.lines().any(|l| l.trim() == "hasNeighbour: 2450"), "{out}");
    assert_eq!(line_count(&out, "derived,"), 5);

    let out = ok(&["--facts", &chain, "materialize"], "");
    assert!(out.contains("0 derived"), "{out}");

    let ds2 = generate(&dir, &["multirel-ds2", "--n", "60"], "d.nt");
    let rs3 = rules_file("rs3.dl");
    let out = ok(&["--rules", rs3.to_str().unwrap(), "--facts", &ds2, "materialize"], "");
    assert_eq!(line_count(&out, "derived,"), 14, "{out}");
}

#[test]
fn queries_read_explicit_and_derived_facts() {
    let dir = TempDir::new().unwrap();
    let chain = generate(&dir, &["chain-ds1", "--n", "3"], "c.nt");
    let rs1 = rules_file("rs1.dl");
    let base = ["--rules", rs1.to_str().unwrap(), "--facts", chain.as_str(), "query"];
    let run = |pattern: &str| {
        let mut args = base.to_vec();
        args.push(pattern);
        let o = edgelog(&args, "");
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (stdout(&o).lines().count(), stderr(&o))
    };
    assert_eq!(run("hasNeighbour(windTurbine1, ?)").0, 2);
    assert_eq!(run("hasNeighbour(windTurbine1, windTurbine3)").0, 1);
    let (n, err) = run("noSuchPredicate(?, ?)");
    assert_eq!(n, 0);
    assert!(err.contains("0 results"));
    // Explicit facts answer too.
    assert_eq!(run("hasAirTemperatureMesurement(?, ?)").0, 3);
}

#[test]
fn add_rule_touches_only_its_leaf_node() {
    let dir = TempDir::new().unwrap();
    let rs2 = fs::read_to_string(rules_file("rs2.dl")).unwrap();
    let (r18, rest): (Vec<&str>, Vec<&str>) = rs2.lines().partition(|l| l.starts_with("r18:"));
    let without = write(&dir, "rs2-minus.dl", &rest.join("\n"));
    let ds2 = generate(&dir, &["multirel-ds2", "--n", "60"], "d.nt");
    let script = format!("load rules {without}\nload facts {ds2}\nmaterialize\nadd-rule {}\nstats\n", r18[0]);
    let out = ok(&["repl"], &script);
    let update = out.lines().find(|l| l.starts_with("update=insert-rules")).expect("update line");
    assert!(update.contains("plan=[{r18}]"), "{update}");
    // Counters after the update list only the new rule's node.
    let stats_part = &out[out.find("rules: 18").expect("stats")..];
    let nodes: Vec<&str> = stats_part.lines().filter(|l| l.contains(" evals, ")).collect();
    assert_eq!(nodes.len(), 1, "{stats_part}");
    assert!(nodes[0].trim_start().starts_with("{r18}:"));
}

#[test]
fn bad_rule_leaves_state_and_counters_untouched() {
    let dir = TempDir::new().unwrap();
    let rs2 = rules_file("rs2.dl");
    let ds2 = generate(&dir, &["multirel-ds2", "--n", "40"], "d.nt");
    let script = format!(
        "load rules {}\nload facts {ds2}\nmaterialize\nadd-rule r19: p40(X, Y) :- p1(X Y).\nstats\n",
        rs2.display()
    );
    let o = edgelog(&["repl"], &script);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("syntax error"), "{}", stderr(&o));
    let out = stdout(&o);
    let stats_part = &out[out.find("rules: 18").expect("rule count unchanged")..];
    assert_eq!(line_count(stats_part, " evals, "), 0, "{stats_part}");
}

#[test]
fn deleting_a_merging_rule_splits_its_node() {
    let dir = TempDir::new().unwrap();
    let rules = write(&dir, "running.dl", RUNNING_EXAMPLE);
    let facts = write(&dir, "f.dl", "e(a, b).\ne(b, c).\nf(a, c).\n");
    let script = format!("load rules {rules}\nload facts {facts}\nmaterialize\ndel-rule r4\n");
    let out = ok(&["repl"], &script);
    let update = out.lines().find(|l| l.starts_with("update=delete-rules")).expect("update line");
    assert!(update.contains("dihn=[{r2} {r3} {r5} {r6,r7}]"), "{update}");
    assert!(update.contains("dropped=["), "{update}");
}

#[test]
fn fact_updates_in_a_session() {
    let dir = TempDir::new().unwrap();
    let chain = generate(&dir, &["chain-ds1", "--n", "6", "--anomalous", "1"], "c.nt");
    let rs1 = rules_file("rs1.dl");
    let log = dir.path().join("updates.log");
    let script = "query SensorAnomalyWindTurbine(?)\n\
                  del-fact <windTurbine1> <hasAirTemperatureMesurement> 30 .\n\
                  query SensorAnomalyWindTurbine(?)\n\
                  add-fact hasAirTemperatureMesurement(windTurbine1, 30).\n\
                  query SensorAnomalyWindTurbine(?)\n";
    let out = ok(
        &["--rules", rs1.to_str().unwrap(), "--facts", &chain, "--log", log.to_str().unwrap(), "--format", "dl"],
        script,
    );
    let hits: Vec<&str> = out.lines().filter(|l| l.contains("SensorAnomalyWindTurbine")).collect();
    assert_eq!(hits.len(), 2, "{out}");
    let logged = fs::read_to_string(&log).unwrap();
    assert_eq!(logged.lines().count(), 2);
    assert!(logged.lines().next().unwrap().starts_with("update=delete-facts edb=+0/-1"));
}

#[test]
fn dump_is_sorted_stable_and_reloadable() {
    let dir = TempDir::new().unwrap();
    let ds2 = generate(&dir, &["multirel-ds2", "--n", "30"], "d.nt");
    let rs3 = rules_file("rs3.dl");
    for format in ["nt", "dl"] {
        let args = ["--rules", rs3.to_str().unwrap(), "--facts", ds2.as_str(), "--format", format, "dump", "--which", "all"];
        let a = ok(&args, "");
        assert_eq!(a, ok(&args, ""));
        let lines: Vec<&str> = a.lines().collect();
        let mut sorted = lines.clone();
        sorted.sort();
        assert_eq!(lines, sorted);

        // Reloading the dump as plain facts gives the same set back.
        let path = write(&dir, &format!("dump.{format}"), &a);
        let again = ok(&["--facts", &path, "--format", format, "dump", "--which", "edb"], "");
        let set = |t: &str| t.lines().map(str::to_string).collect::<BTreeSet<_>>();
        assert_eq!(set(&a), set(&again));
    }
}

#[test]
fn graph_export_marks_negative_edges() {
    let rs3 = rules_file("rs3.dl");
    let dot = ok(&["--rules", rs3.to_str().unwrap(), "export-graph"], "");
    assert!(dot.starts_with("digraph hrdg {"));
    assert!(dot.contains("\"{r6}\" -> \"{r10_new}\" [style=dashed];"), "{dot}");
    let dot = ok(&["--rules", rs3.to_str().unwrap(), "export-graph", "--graph", "rules"], "");
    assert!(dot.contains("\"r8\" -> \"r10_new\" [style=dashed];"), "{dot}");
}

#[test]
fn explain_and_trace_flags() {
    let dir = TempDir::new().unwrap();
    let chain = generate(&dir, &["chain-ds1", "--n", "5"], "c.nt");
    let rs1 = rules_file("rs1.dl");
    let out = ok(
        &["--rules", rs1.to_str().unwrap(), "--facts", &chain, "--explain-plan", "--trace-fixpoint", "materialize"],
        "",
    );
    assert_eq!(line_count(&out, "plan r"), 6, "{out}");
    let trace = out.lines().find(|l| l.starts_with("trace {r1,r2}")).expect("trace line");
    // The last recursive round finds nothing new.
    assert!(trace.ends_with(" 0]"), "{trace}");
}

#[test]
fn cumulative_counters_accumulate() {
    let dir = TempDir::new().unwrap();
    let chain = generate(&dir, &["chain-ds1", "--n", "8"], "c.nt");
    let rs1 = rules_file("rs1.dl");
    let script = "materialize\nadd-fact hasNeighbour(windTurbine8, windTurbine9).\nstats\n";
    let evals = |extra: &[&str]| -> u64 {
        let mut args = vec!["--rules", rs1.to_str().unwrap(), "--facts", chain.as_str()];
        args.extend_from_slice(extra);
        let out = ok(&args, script);
        let stats = &out[out.find("rules: 6").unwrap()..];
        stats
            .lines()
            .filter_map(|l| l.split(": ").nth(1)?.split(' ').next()?.parse::<u64>().ok())
            .sum()
    };
    let fresh = evals(&[]);
    let total = evals(&["--cumulative"]);
    assert!(fresh > 0);
    assert!(total > fresh, "{total} <= {fresh}");
}

#[test]
fn bench_scenarios_pass_their_oracles() {
    let out = ok(&["bench", "rs2-insert-r18", "--n", "60"], "");
    assert!(out.starts_with("PASS insert r18"), "{out}");
    let out = ok(&["bench", "rs3-delete-r10", "--n", "60"], "");
    assert!(out.starts_with("PASS delete r10_new"), "{out}");
    let diff: usize = out
        .split_whitespace()
        .find_map(|w| w.strip_prefix("diff="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(diff > 0);
    let out = ok(&["bench", "rs1-scale", "--sizes", "10,20,30"], "");
    for (n, count) in [(10, 90), (20, 380), (30, 870)] {
        assert!(out.lines().any(|l| l.split_whitespace().take(3).eq([n.to_string(), count.to_string(), count.to_string()])), "{out}");
    }
    let out = ok(&["bench", "rs1-data", "--n", "30", "--percents", "10,20"], "");
    assert_eq!(line_count(&out, "PASS"), 4, "{out}");
}

#[test]
fn exit_codes() {
    assert_eq!(edgelog(&["bench", "rs9-insert-r1"], "").status.code(), Some(1));
    assert_eq!(edgelog(&["no-such-command"], "").status.code(), Some(1));
    assert_eq!(edgelog(&["del-rule", "r1"], "").status.code(), Some(1));
    assert_eq!(edgelog(&["--help"], "").status.code(), Some(0));
    assert_eq!(edgelog(&[], "stats\nquit\nstats-typo\n").status.code(), Some(0));
    assert_eq!(edgelog(&[], "stats-typo\n").status.code(), Some(1));
}
