//! Drives the engine over scenarios and checks every property along the way.
//!
//! Two drain disciplines are supported. `Batch` submits every order and then
//! runs to quiescence; `Interleaved` runs to quiescence after each
//! submission. Arrival order is left open by the queue, so both must keep the
//! invariants.
//!
//! [`exhaustive_check`] enumerates every order sequence over a small alphabet
//! and runs each one under both disciplines. Sequences form a tree (every
//! sequence's prefixes are sequences too), which the enumerator walks depth
//! first so the interleaved state of a prefix is computed once and shared by
//! all its extensions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::checks::{self, CheckError, CheckReport};
use crate::engine::{Engine, EngineError, EngineOptions, Rule, TraceStep};
use crate::market::{IncomingOrder, MarketState, OrderId, OrderKind, Price, Qty, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Drain {
    Batch,
    Interleaved,
}

impl Drain {
    pub const BOTH: [Drain; 2] = [Drain::Batch, Drain::Interleaved];
}

impl fmt::Display for Drain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Drain::Batch => "batch",
            Drain::Interleaved => "interleaved",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    Fixed,
    AllPermutations,
    RandomShuffles { count: usize, seed: u64 },
}

/// Upper bound on orders for [`Mode::AllPermutations`] (9! orderings).
pub const MAX_PERMUTED_ORDERS: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub orders: Vec<IncomingOrder>,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("order id {0} is used by more than one limit/market order")]
    DuplicateId(OrderId),
    #[error("order {id}: {kind} orders need a positive quantity")]
    ZeroQty { id: OrderId, kind: OrderKind },
    #[error("{0} orders is too many to permute exhaustively (limit {MAX_PERMUTED_ORDERS})")]
    TooManyToPermute(usize),
    #[error("search space of {space} sequences exceeds the budget of {budget}")]
    BudgetExceeded { space: u128, budget: u128 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Scenario {
    pub fn fixed(orders: Vec<IncomingOrder>) -> Self {
        Scenario {
            orders,
            mode: Mode::Fixed,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut seen = BTreeSet::new();
        for o in self.orders.iter().filter(|o| o.kind != OrderKind::Cancel) {
            if o.qty.0 == 0 {
                return Err(HarnessError::ZeroQty {
                    id: o.id,
                    kind: o.kind,
                });
            }
            if !seen.insert(o.id) {
                return Err(HarnessError::DuplicateId(o.id));
            }
        }
        if self.mode == Mode::AllPermutations && self.orders.len() > MAX_PERMUTED_ORDERS {
            return Err(HarnessError::TooManyToPermute(self.orders.len()));
        }
        Ok(())
    }

    /// Arrival orderings implied by the mode, as index permutations.
    pub fn orderings(&self) -> Vec<Vec<usize>> {
        let identity: Vec<usize> = (0..self.orders.len()).collect();
        match self.mode {
            Mode::Fixed => vec![identity],
            Mode::AllPermutations => {
                let mut out = vec![identity.clone()];
                let mut cur = identity;
                while next_permutation(&mut cur) {
                    out.push(cur.clone());
                }
                out
            }
            Mode::RandomShuffles { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..count)
                    .map(|_| {
                        let mut p = identity.clone();
                        p.shuffle(&mut rng);
                        p
                    })
                    .collect()
            }
        }
    }
}

/// Advances to the next lexicographic permutation; false after the last.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v
        .iter()
        .rposition(|x| *x > v[i])
        .expect("pivot has a larger successor");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

/// Running counts for one named check.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CheckTally {
    pub checked: u64,
    pub failed: u64,
    pub first_failure: Option<String>,
}

/// Every check that the harness evaluates, in report order.
pub const CHECK_ORDER: [&str; 9] = [
    checks::WELL_FORMED,
    checks::NLC,
    checks::GRAMMAR_ORACLE,
    checks::TIME_DISCIPLINE,
    checks::EXCHANGE_LOCALITY,
    checks::FILL_AT_BID_OR_ASK,
    checks::PRICE_TIME_PRIORITY,
    checks::CONSERVATION,
    ENGINE,
];

/// Pseudo-check recording engine errors.
pub const ENGINE: &str = "engine";

/// Aggregated results of checking many transitions and traces.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub states: u64,
    pub transitions: u64,
    pub fills: u64,
    pub traces: u64,
    pub rules: BTreeMap<Rule, u64>,
    pub checks: BTreeMap<&'static str, CheckTally>,
}

impl Tally {
    pub fn record(&mut self, r: CheckReport, context: impl FnOnce() -> String) {
        let t = self.checks.entry(r.check).or_default();
        t.checked += 1;
        if !r.pass {
            t.failed += 1;
            if t.first_failure.is_none() {
                t.first_failure = Some(format!(
                    "{}: {}",
                    context(),
                    r.counterexample.unwrap_or_default()
                ));
            }
        }
    }

    pub fn violations(&self) -> u64 {
        self.checks.values().map(|t| t.failed).sum()
    }

    pub fn failed(&self, check: &str) -> u64 {
        self.checks.get(check).map_or(0, |t| t.failed)
    }

    pub fn checked(&self, check: &str) -> u64 {
        self.checks.get(check).map_or(0, |t| t.checked)
    }

    /// First failing check in [`CHECK_ORDER`], with its counterexample.
    pub fn first_failure(&self) -> Option<(&'static str, String)> {
        CHECK_ORDER.iter().find_map(|name| {
            let t = self.checks.get(name)?;
            (t.failed > 0).then(|| (*name, t.first_failure.clone().unwrap_or_default()))
        })
    }

    /// One report per evaluated check, in [`CHECK_ORDER`].
    pub fn reports(&self) -> Vec<CheckReport> {
        CHECK_ORDER
            .iter()
            .filter_map(|name| {
                let t = self.checks.get(name)?;
                Some(match &t.first_failure {
                    Some(c) if t.failed > 0 => CheckReport::fail(name, c.clone()),
                    _ => CheckReport::pass(name),
                })
            })
            .collect()
    }

    pub fn merge(&mut self, other: Tally) {
        self.states += other.states;
        self.transitions += other.transitions;
        self.fills += other.fills;
        self.traces += other.traces;
        for (r, n) in other.rules {
            *self.rules.entry(r).or_default() += n;
        }
        for (name, t) in other.checks {
            let mine = self.checks.entry(name).or_default();
            mine.checked += t.checked;
            mine.failed += t.failed;
            if mine.first_failure.is_none() {
                mine.first_failure = t.first_failure;
            }
        }
    }

    pub fn check_state(&mut self, state: &MarketState, at: &dyn Fn() -> String) {
        self.states += 1;
        let violations = state.well_formed();
        if violations.is_empty() {
            self.record(CheckReport::pass(checks::WELL_FORMED), at);
        } else {
            let detail = checks::render_violations(&violations);
            self.record(CheckReport::fail(checks::WELL_FORMED, detail.clone()), at);
            // A state outside the grammar's language fails the NLC property
            // outright; there is no derivation to compare against.
            self.record(
                CheckReport::fail(checks::NLC, format!("state not generable: {detail}")),
                at,
            );
            return;
        }
        match (
            checks::check_nlc(state),
            checks::check_grammar_oracle(state),
        ) {
            (Ok(nlc), Ok(oracle)) => {
                self.record(nlc, at);
                self.record(oracle, at);
            }
            (Err(e), _) | (_, Err(e)) => {
                self.record(CheckReport::fail(checks::NLC, e.to_string()), at)
            }
        }
    }

    pub fn check_transition(&mut self, step: &TraceStep, at: &dyn Fn() -> String) {
        self.transitions += 1;
        *self.rules.entry(step.event.rule).or_default() += 1;
        let here = || {
            format!(
                "{} [{} order {}]",
                at(),
                step.event.rule,
                step.event.order_id
            )
        };
        self.record(
            checks::check_time_discipline(&step.pre, &step.post, &step.event),
            here,
        );
        if step.event.fill.is_some() {
            self.fills += 1;
            for r in [
                checks::check_exchange_locality(&step.pre, &step.post, &step.event),
                checks::check_fill_at_bid_or_ask(&step.pre, &step.event),
            ] {
                self.record(r.unwrap_or_else(|e| error_report(&e)), here);
            }
        }
        self.check_state(&step.post, &here);
    }

    /// `segment` is the part of the run to check for priority; `full` must
    /// start from the scenario's initial state.
    pub fn check_trace(
        &mut self,
        segment: &[TraceStep],
        full: &[TraceStep],
        at: &dyn Fn() -> String,
    ) {
        self.traces += 1;
        let priority = checks::check_price_time_priority(segment)
            .unwrap_or_else(|e| CheckReport::fail(checks::PRICE_TIME_PRIORITY, e.to_string()));
        self.record(priority, at);
        let conservation = checks::check_conservation(full)
            .unwrap_or_else(|e| CheckReport::fail(checks::CONSERVATION, e.to_string()));
        self.record(conservation, at);
    }

    pub fn engine_error(&mut self, err: &EngineError, at: &dyn Fn() -> String) {
        self.record(CheckReport::fail(ENGINE, err.to_string()), at);
    }
}

fn error_report(e: &CheckError) -> CheckReport {
    let check = match e {
        CheckError::NotAFill { check, .. } => check,
        _ => checks::WELL_FORMED,
    };
    CheckReport::fail(check, e.to_string())
}

/// Outcome of running one arrival ordering under one drain discipline.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub ordering: Vec<usize>,
    pub drain: Drain,
    pub final_state: MarketState,
    pub trace: Vec<TraceStep>,
    pub tally: Tally,
    pub error: Option<EngineError>,
}

impl RunOutcome {
    pub fn reports(&self) -> Vec<CheckReport> {
        self.tally.reports()
    }

    pub fn passed(&self) -> bool {
        self.error.is_none() && self.tally.violations() == 0
    }
}

/// Runs `orders` from `init()` under `drain`, checking every transition and
/// the finished trace.
pub fn run_orders(
    engine: &Engine,
    orders: &[IncomingOrder],
    drain: Drain,
) -> (MarketState, Vec<TraceStep>, Tally, Option<EngineError>) {
    let mut tally = Tally::default();
    let init = MarketState::init();
    tally.check_state(&init, &|| "init".to_string());
    let mut trace: Vec<TraceStep> = Vec::new();
    let mut state = init;
    let mut error = None;

    let drain_now = |state: &mut MarketState,
                     trace: &mut Vec<TraceStep>,
                     tally: &mut Tally|
     -> Result<(), EngineError> {
        let mut steps = 0usize;
        while let Some((next, event)) = engine.step(state)? {
            let pre = std::mem::replace(state, next);
            let step = TraceStep {
                pre,
                event,
                post: state.clone(),
            };
            let n = trace.len();
            tally.check_transition(&step, &|| format!("step {n}"));
            trace.push(step);
            steps += 1;
            if steps >= engine.options().step_budget && !state.is_quiescent() {
                return Err(EngineError::StepBudgetExhausted {
                    budget: engine.options().step_budget,
                });
            }
        }
        Ok(())
    };

    'run: {
        for order in orders {
            match engine.submit(&state, *order) {
                Ok((next, event)) => {
                    let step = TraceStep {
                        pre: state,
                        event,
                        post: next.clone(),
                    };
                    let n = trace.len();
                    tally.check_transition(&step, &|| format!("step {n}"));
                    trace.push(step);
                    state = next;
                }
                Err(e) => {
                    error = Some(e);
                    break 'run;
                }
            }
            if drain == Drain::Interleaved {
                if let Err(e) = drain_now(&mut state, &mut trace, &mut tally) {
                    error = Some(e);
                    break 'run;
                }
            }
        }
        if drain == Drain::Batch {
            if let Err(e) = drain_now(&mut state, &mut trace, &mut tally) {
                error = Some(e);
            }
        }
    }
    match &error {
        Some(e) => tally.engine_error(e, &|| format!("after step {}", trace.len())),
        None => tally.check_trace(&trace, &trace, &|| "trace".to_string()),
    }
    (state, trace, tally, error)
}

/// Runs every ordering implied by the scenario's mode under each of `drains`.
pub fn run_scenario(
    scenario: &Scenario,
    drains: &[Drain],
    opts: EngineOptions,
) -> Result<Vec<RunOutcome>, HarnessError> {
    scenario.validate()?;
    let engine = Engine::new(opts);
    let mut out = Vec::new();
    for ordering in scenario.orderings() {
        let orders: Vec<IncomingOrder> = ordering.iter().map(|i| scenario.orders[*i]).collect();
        for drain in drains {
            let (final_state, trace, tally, error) = run_orders(&engine, &orders, *drain);
            out.push(RunOutcome {
                ordering: ordering.clone(),
                drain: *drain,
                final_state,
                trace,
                tally,
                error,
            });
        }
    }
    Ok(out)
}

/// Alphabet and depth for [`exhaustive_check`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExhaustiveConfig {
    pub max_orders: usize,
    pub prices: BTreeSet<Price>,
    pub qtys: BTreeSet<Qty>,
    pub kinds: BTreeSet<OrderKind>,
    /// Refuse to run when the number of sequences exceeds this.
    pub budget: u128,
    pub drains: Vec<Drain>,
    pub engine: EngineOptions,
}

pub const DEFAULT_BUDGET: u128 = 5_000_000;

impl ExhaustiveConfig {
    pub fn new(max_orders: usize, prices: &[u64], qtys: &[u64], kinds: &[OrderKind]) -> Self {
        ExhaustiveConfig {
            max_orders,
            prices: prices.iter().copied().map(Price).collect(),
            qtys: qtys.iter().copied().map(Qty).collect(),
            kinds: kinds.iter().copied().collect(),
            budget: DEFAULT_BUDGET,
            drains: Drain::BOTH.to_vec(),
            engine: EngineOptions::default(),
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.kinds.is_empty() {
            return Err(HarnessError::Config("no order kinds".into()));
        }
        if self.qtys.iter().any(|q| q.0 == 0) {
            return Err(HarnessError::Config("quantities must be positive".into()));
        }
        let needs_prices =
            self.kinds.contains(&OrderKind::Limit) || self.kinds.contains(&OrderKind::Cancel);
        if needs_prices && self.prices.is_empty() {
            return Err(HarnessError::Config(
                "limit and cancel orders need at least one price".into(),
            ));
        }
        let needs_qtys =
            self.kinds.contains(&OrderKind::Limit) || self.kinds.contains(&OrderKind::Market);
        if needs_qtys && self.qtys.is_empty() {
            return Err(HarnessError::Config(
                "limit and market orders need at least one quantity".into(),
            ));
        }
        if self.drains.is_empty() {
            return Err(HarnessError::Config("no drain discipline".into()));
        }
        Ok(())
    }

    /// Id that no enumerated order carries; cancels aimed at it exercise the
    /// not-found rules.
    pub fn absent_id(&self) -> OrderId {
        OrderId(self.max_orders as u64)
    }

    fn per_side_limits(&self) -> u128 {
        if self.kinds.contains(&OrderKind::Limit) {
            (self.prices.len() * self.qtys.len()) as u128
        } else {
            0
        }
    }

    fn per_side_markets(&self) -> u128 {
        if self.kinds.contains(&OrderKind::Market) {
            self.qtys.len() as u128
        } else {
            0
        }
    }

    fn per_side_cancels(&self, known_ids: usize) -> u128 {
        if self.kinds.contains(&OrderKind::Cancel) {
            (self.prices.len() * (known_ids + 1)) as u128
        } else {
            0
        }
    }

    /// Number of sequences of length 1..=max_orders.
    pub fn space_size(&self) -> u128 {
        // ways[k] = number of prefixes of the current length with k id-bearing orders
        let mut ways: Vec<u128> = vec![1];
        let mut total = 0u128;
        for _ in 0..self.max_orders {
            let mut next = vec![0u128; ways.len() + 1];
            for (k, w) in ways.iter().enumerate() {
                if *w == 0 {
                    continue;
                }
                let id_bearing = 2 * (self.per_side_limits() + self.per_side_markets());
                next[k + 1] = next[k + 1].saturating_add(w.saturating_mul(id_bearing));
                next[k] = next[k].saturating_add(w.saturating_mul(2 * self.per_side_cancels(k)));
            }
            total = total.saturating_add(next.iter().fold(0u128, |a, b| a.saturating_add(*b)));
            ways = next;
        }
        total
    }

    /// Orders that may follow a prefix whose id-bearing orders used `known`.
    pub fn symbols(&self, position: usize, known: &[OrderId]) -> Vec<IncomingOrder> {
        let id = position as u64;
        let mut out = Vec::new();
        for kind in &self.kinds {
            for side in Side::ALL {
                match kind {
                    OrderKind::Limit => {
                        for p in &self.prices {
                            for q in &self.qtys {
                                out.push(IncomingOrder::limit(side, p.0, q.0, id));
                            }
                        }
                    }
                    OrderKind::Market => {
                        for q in &self.qtys {
                            out.push(IncomingOrder::market(side, q.0, id));
                        }
                    }
                    OrderKind::Cancel => {
                        for p in &self.prices {
                            for target in known.iter().copied().chain([self.absent_id()]) {
                                out.push(IncomingOrder::cancel(side, p.0, target.0));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// The first failing sequence found, cut down to its shortest failing prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub sequence: Vec<IncomingOrder>,
    pub drain: Drain,
    pub check: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExhaustiveSummary {
    pub space_size: u128,
    pub sequences: u64,
    pub runs: u64,
    pub tally: Tally,
    pub counterexample: Option<Counterexample>,
}

impl ExhaustiveSummary {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none() && self.tally.violations() == 0
    }
}

struct Walker<'a> {
    cfg: &'a ExhaustiveConfig,
    engine: Engine,
    tally: Tally,
    sequences: u64,
    runs: u64,
    /// Shortest failing sequence, ties broken by symbol path.
    first: Option<(Vec<usize>, Vec<IncomingOrder>, Drain)>,
}

impl Walker<'_> {
    fn note_failure(&mut self, path: &[usize], seq: &[IncomingOrder], drain: Drain, before: u64) {
        if self.tally.violations() > before
            && self
                .first
                .as_ref()
                .is_none_or(|(p, _, _)| (path.len(), path) < (p.len(), p.as_slice()))
        {
            self.first = Some((path.to_vec(), seq.to_vec(), drain));
        }
    }

    /// Visits the node for `seq` and recurses into its extensions.
    /// `parent` is the interleaved state after the parent prefix, or `None`
    /// once an interleaved run on this path has hit an engine error.
    fn visit(
        &mut self,
        path: &mut Vec<usize>,
        seq: &mut Vec<IncomingOrder>,
        known: &mut Vec<OrderId>,
        parent: Option<&MarketState>,
        trace: &mut Vec<TraceStep>,
    ) {
        self.sequences += 1;
        let at = || format!("{}", SequenceDisplay(seq));

        if self.cfg.drains.contains(&Drain::Batch) {
            self.runs += 1;
            let before = self.tally.violations();
            let (_, _, mut tally, _) = run_orders(&self.engine, seq, Drain::Batch);
            relabel(&mut tally, &at, Drain::Batch);
            self.tally.merge(tally);
            self.note_failure(path, seq, Drain::Batch, before);
        }

        let trace_len = trace.len();
        let mut child = None;
        if let (Some(parent), true) = (parent, self.cfg.drains.contains(&Drain::Interleaved)) {
            self.runs += 1;
            let before = self.tally.violations();
            let label = || format!("{} (interleaved)", at());
            match self.extend_interleaved(parent, *seq.last().expect("nonempty"), trace, &label) {
                Ok(state) => {
                    let mut t = Tally::default();
                    t.check_trace(&trace[trace_len..], trace, &label);
                    self.tally.merge(t);
                    child = Some(state);
                }
                Err(e) => self.tally.engine_error(&e, &label),
            }
            self.note_failure(path, seq, Drain::Interleaved, before);
        }

        if seq.len() < self.cfg.max_orders {
            let position = seq.len();
            for (i, order) in self.cfg.symbols(position, known).into_iter().enumerate() {
                path.push(i);
                seq.push(order);
                let bears_id = order.kind != OrderKind::Cancel;
                if bears_id {
                    known.push(order.id);
                }
                self.visit(path, seq, known, child.as_ref(), trace);
                if bears_id {
                    known.pop();
                }
                seq.pop();
                path.pop();
            }
        }
        trace.truncate(trace_len);
    }

    fn extend_interleaved(
        &mut self,
        parent: &MarketState,
        order: IncomingOrder,
        trace: &mut Vec<TraceStep>,
        at: &dyn Fn() -> String,
    ) -> Result<MarketState, EngineError> {
        let (mut state, event) = self.engine.submit(parent, order)?;
        let step = TraceStep {
            pre: parent.clone(),
            event,
            post: state.clone(),
        };
        self.tally
            .check_transition(&step, &|| format!("{} (interleaved)", at()));
        trace.push(step);
        let mut steps = 0usize;
        while let Some((next, event)) = self.engine.step(&state)? {
            let step = TraceStep {
                pre: state,
                event,
                post: next.clone(),
            };
            self.tally
                .check_transition(&step, &|| format!("{} (interleaved)", at()));
            trace.push(step);
            state = next;
            steps += 1;
            if steps >= self.engine.options().step_budget && !state.is_quiescent() {
                return Err(EngineError::StepBudgetExhausted {
                    budget: self.engine.options().step_budget,
                });
            }
        }
        Ok(state)
    }
}

fn relabel(tally: &mut Tally, at: &dyn Fn() -> String, drain: Drain) {
    for t in tally.checks.values_mut() {
        if let Some(f) = &mut t.first_failure {
            *f = format!("{} ({drain}) {f}", at());
        }
    }
}

struct SequenceDisplay<'a>(&'a [IncomingOrder]);

impl fmt::Display for SequenceDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, o) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(&crate::scenario::format_order(o))?;
        }
        f.write_str("]")
    }
}

/// Runs `seq` under `drain` and returns the first failing check, if any.
pub fn first_failure(
    engine: &Engine,
    seq: &[IncomingOrder],
    drain: Drain,
) -> Option<(&'static str, String)> {
    let (_, _, tally, _) = run_orders(engine, seq, drain);
    tally.first_failure()
}

/// Shortest prefix of `seq` that still fails under `drain`.
pub fn minimize_prefix(
    engine: &Engine,
    seq: &[IncomingOrder],
    drain: Drain,
) -> Option<Counterexample> {
    (1..=seq.len()).find_map(|n| {
        first_failure(engine, &seq[..n], drain).map(|(check, detail)| Counterexample {
            sequence: seq[..n].to_vec(),
            drain,
            check,
            detail,
        })
    })
}

/// Checks every property on every sequence over the configured alphabet.
pub fn exhaustive_check(cfg: &ExhaustiveConfig) -> Result<ExhaustiveSummary, HarnessError> {
    cfg.validate()?;
    let space = cfg.space_size();
    if space > cfg.budget {
        return Err(HarnessError::BudgetExceeded {
            space,
            budget: cfg.budget,
        });
    }
    let engine = Engine::new(cfg.engine);
    let roots = if cfg.max_orders == 0 {
        Vec::new()
    } else {
        cfg.symbols(0, &[])
    };

    let walkers: Vec<Walker<'_>> = roots
        .into_par_iter()
        .enumerate()
        .map(|(i, order)| {
            let mut w = Walker {
                cfg,
                engine,
                tally: Tally::default(),
                sequences: 0,
                runs: 0,
                first: None,
            };
            let mut path = vec![i];
            let mut seq = vec![order];
            let mut known = if order.kind == OrderKind::Cancel {
                vec![]
            } else {
                vec![order.id]
            };
            let mut trace = Vec::new();
            w.visit(
                &mut path,
                &mut seq,
                &mut known,
                Some(&MarketState::init()),
                &mut trace,
            );
            w
        })
        .collect();

    let mut tally = Tally::default();
    let mut sequences = 0;
    let mut runs = 0;
    let mut first: Option<(Vec<usize>, Vec<IncomingOrder>, Drain)> = None;
    for w in walkers {
        tally.merge(w.tally);
        sequences += w.sequences;
        runs += w.runs;
        if let Some(cand) = w.first {
            if first
                .as_ref()
                .is_none_or(|(p, _, _)| (cand.0.len(), &cand.0) < (p.len(), p))
            {
                first = Some(cand);
            }
        }
    }
    let counterexample = first.and_then(|(_, seq, drain)| minimize_prefix(&engine, &seq, drain));
    Ok(ExhaustiveSummary {
        space_size: space,
        sequences,
        runs,
        tally,
        counterexample,
    })
}
