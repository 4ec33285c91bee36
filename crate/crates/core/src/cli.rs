//! The `ats` command line.
//!
//! Exit codes: 0 success, 1 unreadable or unparsable input, 2 engine error
//! or failed check, 3 enumeration refused for exceeding its budget.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::checks::CheckReport;
use crate::engine::{Engine, EngineOptions, Fault, MarketRemainder, Rule, DEFAULT_STEP_BUDGET};
use crate::harness::{self, Drain, ExhaustiveConfig, HarnessError, Mode, Scenario, DEFAULT_BUDGET};
use crate::market::OrderKind;
use crate::scenario::{format_order, parse_scenario};
use crate::trace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_ENGINE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "ats",
    version,
    about = "Price/time priority matching engine with executable market invariants"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file in arrival order and write its trace.
    Run(RunArgs),
    /// Run a scenario with every checker enabled at every transition.
    Check(CheckArgs),
    /// Exhaustively check every order sequence over a small alphabet.
    Enumerate(EnumerateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RemainderArg {
    Market,
    Limit,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DrainArg {
    Batch,
    Interleaved,
    Both,
}

impl DrainArg {
    fn drains(self) -> Vec<Drain> {
        match self {
            DrainArg::Batch => vec![Drain::Batch],
            DrainArg::Interleaved => vec![Drain::Interleaved],
            DrainArg::Both => Drain::BOTH.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
struct EngineArgs {
    /// What the unfilled part of a partially filled market order becomes.
    #[arg(long, value_enum, default_value = "market")]
    market_remainder: RemainderArg,
    /// Only cancel a lone resident when the cancel names its exact quantity.
    #[arg(long)]
    cancel_match_qty: bool,
    /// Deliberately break the engine (skip-price-removal, ignore-store-guard, worst-price).
    #[arg(long, hide = true, value_parser = parse_fault)]
    inject_fault: Option<Fault>,
    #[arg(long, default_value_t = DEFAULT_STEP_BUDGET)]
    step_budget: usize,
}

impl EngineArgs {
    fn options(&self) -> EngineOptions {
        EngineOptions {
            market_remainder: match self.market_remainder {
                RemainderArg::Market => MarketRemainder::Market,
                RemainderArg::Limit => MarketRemainder::Limit,
            },
            cancel_match_qty: self.cancel_match_qty,
            fault: self.inject_fault,
            step_budget: self.step_budget,
        }
    }
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    Fault::from_name(s).ok_or_else(|| {
        format!(
            "unknown fault `{s}`; expected one of {}",
            Fault::ALL.map(|f| f.name()).join(", ")
        )
    })
}

#[derive(Debug, Args)]
struct RunArgs {
    file: PathBuf,
    /// Write the trace here instead of stdout.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "interleaved")]
    drain: DrainArg,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Debug, Args)]
struct CheckArgs {
    file: PathBuf,
    /// fixed, permutations, or random:<count>
    #[arg(long, default_value = "fixed", value_parser = parse_mode)]
    mode: ModeArg,
    /// Seed for random:<count>.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "both")]
    drain: DrainArg,
    /// Write one JSON line of reports per run here.
    #[arg(long)]
    report_out: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Debug, Clone, Copy)]
enum ModeArg {
    Fixed,
    Permutations,
    Random(usize),
}

fn parse_mode(s: &str) -> Result<ModeArg, String> {
    match s {
        "fixed" => Ok(ModeArg::Fixed),
        "permutations" => Ok(ModeArg::Permutations),
        _ => s
            .strip_prefix("random:")
            .and_then(|k| k.parse().ok())
            .map(ModeArg::Random)
            .ok_or_else(|| format!("expected fixed, permutations or random:<count>, found `{s}`")),
    }
}

#[derive(Debug, Args)]
struct EnumerateArgs {
    #[arg(long)]
    max_orders: usize,
    /// Comma-separated price alphabet.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    prices: Vec<u64>,
    /// Comma-separated quantity alphabet.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    qtys: Vec<u64>,
    /// Comma-separated subset of limit,market,cancel.
    #[arg(long, value_delimiter = ',', value_parser = parse_kind, default_value = "limit")]
    kinds: Vec<OrderKind>,
    /// Refuse to run if the number of sequences exceeds this.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u128,
    #[arg(long, value_enum, default_value = "both")]
    drain: DrainArg,
    /// Print the summary as JSON.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    engine: EngineArgs,
}

fn parse_kind(s: &str) -> Result<OrderKind, String> {
    OrderKind::ALL
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| format!("unknown order kind `{s}`"))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, out, err),
        Command::Check(a) => cmd_check(a, out, err),
        Command::Enumerate(a) => cmd_enumerate(a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INPUT
        }
    }
}

fn read_scenario(
    path: &PathBuf,
    err: &mut dyn Write,
) -> std::io::Result<Option<Vec<crate::IncomingOrder>>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            writeln!(err, "error: cannot read {}: {e}", path.display())?;
            return Ok(None);
        }
    };
    match parse_scenario(&text) {
        Ok(o) => Ok(Some(o)),
        Err(e) => {
            for line in &e.errors {
                writeln!(err, "{}:{}", path.display(), line)?;
            }
            Ok(None)
        }
    }
}

fn cmd_run(a: RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> std::io::Result<i32> {
    let Some(orders) = read_scenario(&a.file, err)? else {
        return Ok(EXIT_INPUT);
    };
    let scenario = Scenario::fixed(orders);
    if let Err(e) = scenario.validate() {
        writeln!(err, "error: {e}")?;
        return Ok(EXIT_INPUT);
    }
    let engine = Engine::new(a.engine.options());
    let drain = match a.drain {
        DrainArg::Batch => Drain::Batch,
        DrainArg::Interleaved | DrainArg::Both => Drain::Interleaved,
    };
    let (_, steps, error) = plain_run(&engine, &scenario.orders, drain);
    let text = trace::to_jsonl(&trace::records(&steps));
    match &a.trace_out {
        Some(p) => std::fs::write(p, &text)?,
        None => out.write_all(text.as_bytes())?,
    }
    if let Some(e) = error {
        writeln!(err, "engine error: {e}")?;
        return Ok(EXIT_ENGINE);
    }
    Ok(EXIT_OK)
}

/// Runs without checkers; the trace ends at the first engine error.
fn plain_run(
    engine: &Engine,
    orders: &[crate::IncomingOrder],
    drain: Drain,
) -> (
    crate::MarketState,
    Vec<crate::TraceStep>,
    Option<crate::EngineError>,
) {
    let mut state = crate::MarketState::init();
    let mut steps = Vec::new();
    let drain_now = |state: &mut crate::MarketState, steps: &mut Vec<crate::TraceStep>| {
        let (end, mut tail) = engine.run_traced(state)?;
        steps.append(&mut tail);
        *state = end;
        Ok::<_, crate::EngineError>(())
    };
    for o in orders {
        match engine.submit(&state, *o) {
            Ok((next, event)) => {
                steps.push(crate::TraceStep {
                    pre: state,
                    event,
                    post: next.clone(),
                });
                state = next;
            }
            Err(e) => return (state, steps, Some(e)),
        }
        if drain == Drain::Interleaved {
            if let Err(e) = drain_now(&mut state, &mut steps) {
                return (state, steps, Some(e));
            }
        }
    }
    if drain == Drain::Batch {
        if let Err(e) = drain_now(&mut state, &mut steps) {
            return (state, steps, Some(e));
        }
    }
    (state, steps, None)
}

#[derive(Serialize)]
struct RunReport<'a> {
    ordering: &'a [usize],
    drain: Drain,
    pass: bool,
    reports: Vec<CheckReport>,
}

fn cmd_check(a: CheckArgs, out: &mut dyn Write, err: &mut dyn Write) -> std::io::Result<i32> {
    let Some(orders) = read_scenario(&a.file, err)? else {
        return Ok(EXIT_INPUT);
    };
    let mode = match a.mode {
        ModeArg::Fixed => Mode::Fixed,
        ModeArg::Permutations => Mode::AllPermutations,
        ModeArg::Random(count) => Mode::RandomShuffles {
            count,
            seed: a.seed,
        },
    };
    let scenario = Scenario { orders, mode };
    let outcomes = match harness::run_scenario(&scenario, &a.drain.drains(), a.engine.options()) {
        Ok(o) => o,
        Err(e) => {
            writeln!(err, "error: {e}")?;
            return Ok(EXIT_INPUT);
        }
    };

    let mut report_lines = String::new();
    let mut failed_runs = 0usize;
    for o in &outcomes {
        let pass = o.passed();
        let reports = o.reports();
        if !pass {
            failed_runs += 1;
            writeln!(out, "FAIL ordering {:?} ({})", o.ordering, o.drain)?;
            for r in reports.iter().filter(|r| !r.pass) {
                writeln!(
                    out,
                    "  {}: {}",
                    r.check,
                    r.counterexample.as_deref().unwrap_or("")
                )?;
            }
        }
        let line = RunReport {
            ordering: &o.ordering,
            drain: o.drain,
            pass,
            reports,
        };
        report_lines.push_str(&serde_json::to_string(&line).expect("reports serialize"));
        report_lines.push('\n');
    }
    if let Some(p) = &a.report_out {
        std::fs::write(p, report_lines)?;
    }
    let transitions: u64 = outcomes.iter().map(|o| o.tally.transitions).sum();
    writeln!(
        out,
        "{} runs, {} transitions checked, {} failed",
        outcomes.len(),
        transitions,
        failed_runs
    )?;
    Ok(if failed_runs == 0 {
        EXIT_OK
    } else {
        EXIT_ENGINE
    })
}

fn cmd_enumerate(
    a: EnumerateArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> std::io::Result<i32> {
    let mut cfg = ExhaustiveConfig::new(a.max_orders, &a.prices, &a.qtys, &a.kinds);
    cfg.budget = a.budget;
    cfg.drains = a.drain.drains();
    cfg.engine = a.engine.options();
    let space = cfg.space_size();
    if !a.json {
        writeln!(out, "search space: {space} sequences")?;
    }
    let summary = match harness::exhaustive_check(&cfg) {
        Ok(s) => s,
        Err(e @ HarnessError::BudgetExceeded { .. }) => {
            writeln!(err, "refused: {e}")?;
            return Ok(EXIT_BUDGET);
        }
        Err(e) => {
            writeln!(err, "error: {e}")?;
            return Ok(EXIT_INPUT);
        }
    };
    if a.json {
        writeln!(
            out,
            "{}",
            serde_json::to_string(&summary).expect("summary serializes")
        )?;
    } else {
        let t = &summary.tally;
        writeln!(
            out,
            "sequences: {}  runs: {}",
            summary.sequences, summary.runs
        )?;
        writeln!(
            out,
            "states: {}  transitions: {}  fills: {}  traces: {}",
            t.states, t.transitions, t.fills, t.traces
        )?;
        for (name, c) in &t.checks {
            writeln!(
                out,
                "  {name:<20} checked {:>10}  failed {}",
                c.checked, c.failed
            )?;
        }
        let unseen: Vec<&str> = Rule::MATCHING
            .iter()
            .filter(|r| !t.rules.contains_key(r))
            .map(|r| r.name())
            .collect();
        if !unseen.is_empty() {
            writeln!(out, "rules never applied: {}", unseen.join(", "))?;
        }
        if let Some(c) = &summary.counterexample {
            writeln!(
                out,
                "counterexample ({}, {} drain): {}",
                c.check, c.drain, c.detail
            )?;
            for o in &c.sequence {
                writeln!(out, "  {}", format_order(o))?;
            }
        }
    }
    Ok(if summary.passed() {
        EXIT_OK
    } else {
        EXIT_ENGINE
    })
}
