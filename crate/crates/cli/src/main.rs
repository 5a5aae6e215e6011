mod bench;
mod pattern;
mod session;

use std::io::{self, BufRead, IsTerminal, Write};
use std::panic;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use session::{Failure, Session};

#[derive(Parser, Debug)]
#[command(name = "edgelog", version, about = "Datalog materialization with live rule and fact updates")]
struct Cli {
    #[command(flatten)]
    opts: Options,

    /// Without a command, reads commands from stdin.
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone, Debug)]
pub struct Options {
    /// Rule file loaded before the command runs. Repeatable.
    #[arg(long = "rules", global = true, value_name = "PATH")]
    pub rules: Vec<PathBuf>,

    /// Fact file (N-Triples or `p(s, o).` lines) loaded before the command runs. Repeatable.
    #[arg(long = "facts", global = true, value_name = "PATH")]
    pub facts: Vec<PathBuf>,

    /// Print each rule's join plan after materializing or updating.
    #[arg(long, global = true)]
    pub explain_plan: bool,

    /// Print per-round delta sizes of every evaluated node.
    #[arg(long, global = true)]
    pub trace_fixpoint: bool,

    /// Seed for generators and benchmarks.
    #[arg(long, global = true, default_value_t = 20)]
    pub seed: u64,

    /// Output syntax for facts.
    #[arg(long, global = true, value_enum, default_value_t = Format::Nt)]
    pub format: Format,

    /// Keep instrumentation counters across commands.
    #[arg(long, global = true)]
    pub cumulative: bool,

    /// Append one line per applied update to this file.
    #[arg(long, global = true, value_name = "PATH")]
    pub log: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    /// N-Triples.
    Nt,
    /// `p(s, o).` lines.
    Dl,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoadKind {
    Rules,
    Facts,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Idb,
    Edb,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    /// Rule dependency graph.
    Rules,
    /// Graph of hyper-nodes.
    Hyper,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    ChainDs1,
    MultirelDs2,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Load rule or fact files into the session.
    Load {
        #[arg(value_enum)]
        kind: LoadKind,
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Evaluate the whole program from scratch.
    Materialize,
    /// Insert a rule, `[id:] head :- body.`, and maintain the materialization.
    AddRule { text: String },
    /// Delete rules by id and maintain the materialization.
    DelRule {
        #[arg(required = true)]
        ids: Vec<String>,
    },
    /// Insert facts, one per line.
    AddFact { facts: String },
    /// Delete facts, one per line.
    DelFact { facts: String },
    /// Match `p(s|?, o|?)` or `C(x|?)` against explicit and derived facts.
    Query { pattern: String },
    /// Print facts sorted, one per line.
    Dump {
        #[arg(long, value_enum, default_value_t = Which::Idb)]
        which: Which,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Write a dependency graph in DOT syntax.
    ExportGraph {
        #[arg(long, value_enum, default_value_t = GraphKind::Hyper)]
        graph: GraphKind,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic data set.
    Generate {
        #[arg(value_enum)]
        kind: Generator,
        /// Number of turbines or entities.
        #[arg(long)]
        n: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Turbine reading 30.0 instead of about 20.0 (chain-ds1).
        #[arg(long)]
        anomalous: Option<usize>,
        #[command(flatten)]
        densities: Densities,
    },
    /// Run a packaged workload against its from-scratch oracle.
    Bench {
        /// rs1-scale, rs1-data, rule-suite, or rs2|rs3-insert|delete-<ids>.
        scenario: String,
        /// Data size (turbines or entities).
        #[arg(long)]
        n: Option<usize>,
        /// Chain sizes for rs1-scale.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Extra turbines, in percent, for rs1-data.
        #[arg(long, value_delimiter = ',')]
        percents: Vec<usize>,
    },
    /// Print program size and instrumentation counters.
    Stats,
    /// Read commands from stdin.
    Repl,
}

/// Per-entity edge ratios of multirel-ds2; unset values keep the defaults.
#[derive(Args, Clone, Debug, Default)]
pub struct Densities {
    #[arg(long)]
    pub p1: Option<f64>,
    #[arg(long)]
    pub p2: Option<f64>,
    #[arg(long)]
    pub p2_span: Option<usize>,
    #[arg(long)]
    pub p3: Option<f64>,
    #[arg(long)]
    pub p4: Option<f64>,
    #[arg(long)]
    pub p5_shadow: Option<f64>,
    #[arg(long)]
    pub p5: Option<f64>,
}

/// Commands that take the rest of a REPL line verbatim.
const RAW_COMMANDS: [&str; 4] = ["add-rule", "add-fact", "del-fact", "query"];

#[derive(Parser, Debug)]
#[command(no_binary_name = true, disable_version_flag = true)]
struct Line {
    #[command(subcommand)]
    command: Command,
}

fn split_line(line: &str) -> Vec<String> {
    let line = line.trim();
    let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
    if RAW_COMMANDS.contains(&head) {
        vec![head.to_string(), rest.trim().to_string()]
    } else {
        line.split_whitespace().map(str::to_string).collect()
    }
}

fn repl(session: &mut Session) -> Failure {
    let stdin = io::stdin();
    let interactive = stdin.is_terminal();
    let mut worst = Failure::None;
    let mut pending = String::new();
    let mut lines = stdin.lock().lines();
    loop {
        if interactive {
            print!("{}", if pending.is_empty() { "> " } else { "| " });
            let _ = io::stdout().flush();
        }
        let Some(Ok(line)) = lines.next() else { break };
        let trimmed = line.trim();
        if pending.is_empty() && (trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%')) {
            continue;
        }
        // A rule may continue over several lines until its final '.'.
        if !pending.is_empty() || (trimmed.starts_with("add-rule") && !trimmed.ends_with('.')) {
            pending.push_str(trimmed);
            pending.push(' ');
            if !trimmed.ends_with('.') {
                continue;
            }
        }
        let text = if pending.is_empty() { trimmed.to_string() } else { std::mem::take(&mut pending) };
        match text.as_str() {
            "quit" | "exit" => break,
            "history" => {
                for (i, h) in session.history().iter().enumerate() {
                    println!("{:>4}  {h}", i + 1);
                }
                continue;
            }
            _ => {}
        }
        let outcome = match Line::try_parse_from(split_line(&text)) {
            Ok(parsed) => run(session, parsed.command, &text),
            Err(e) if !e.use_stderr() => {
                print!("{e}");
                Failure::None
            }
            Err(e) => {
                eprint!("{e}");
                Failure::User
            }
        };
        worst = worst.max(outcome);
    }
    worst
}

fn run(session: &mut Session, command: Command, text: &str) -> Failure {
    let mut out = io::stdout().lock();
    let result = session.execute(&command, &mut out);
    let _ = out.flush();
    match result {
        Ok(()) => {
            session.record(text);
            Failure::None
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.failure()
        }
    }
}

fn exit_code(f: Failure) -> ExitCode {
    match f {
        Failure::None => ExitCode::SUCCESS,
        Failure::User => ExitCode::from(1),
        Failure::Internal => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return exit_code(if e.use_stderr() { Failure::User } else { Failure::None });
        }
    };
    // A panic means an engine invariant broke, not bad input.
    panic::set_hook(Box::new(|info| eprintln!("internal error: {info}")));
    let outcome = panic::catch_unwind(panic::AssertUnwindSafe(|| {
        let mut session = Session::new(cli.opts.clone());
        if let Err(e) = session.preload() {
            eprintln!("error: {e}");
            return e.failure();
        }
        match cli.command {
            None | Some(Command::Repl) => repl(&mut session),
            Some(command) => run(&mut session, command, ""),
        }
    }));
    exit_code(outcome.unwrap_or(Failure::Internal))
}
