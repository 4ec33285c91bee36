//! Executable market properties.
//!
//! State checks look at one [`MarketState`]; transition checks look at one
//! `(pre, event, post)` triple; trace checks look at a whole run. Every check
//! returns a [`CheckReport`] carrying a counterexample when it fails, and a
//! [`CheckError`] when its input does not meet the check's precondition.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::engine::{Rule, TraceStep, TransitionEvent};
use crate::market::{
    BookSide, LogicalTime, MarketState, OrderId, OrderKind, Price, PriceLevel, QueuedOrder,
    ResidentEntry, Side, Violation,
};

pub const WELL_FORMED: &str = "well-formed";
pub const NLC: &str = "no-locked-or-crossed";
pub const GRAMMAR_ORACLE: &str = "grammar-oracle";
pub const TIME_DISCIPLINE: &str = "time-discipline";
pub const EXCHANGE_LOCALITY: &str = "exchange-locality";
pub const FILL_AT_BID_OR_ASK: &str = "fill-at-bid-or-ask";
pub const PRICE_TIME_PRIORITY: &str = "price-time-priority";
pub const CONSERVATION: &str = "conservation";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub check: &'static str,
    pub pass: bool,
    pub counterexample: Option<String>,
}

impl CheckReport {
    pub fn pass(check: &'static str) -> Self {
        CheckReport {
            check,
            pass: true,
            counterexample: None,
        }
    }

    pub fn fail(check: &'static str, counterexample: impl Into<String>) -> Self {
        CheckReport {
            check,
            pass: false,
            counterexample: Some(counterexample.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("state is not well formed: {}", render_violations(.0))]
    IllFormed(Vec<Violation>),
    #[error("{check} needs an exchange event, got {rule}")]
    NotAFill { check: &'static str, rule: Rule },
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
}

pub(crate) fn render_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn check_well_formed(state: &MarketState) -> CheckReport {
    let v = state.well_formed();
    if v.is_empty() {
        CheckReport::pass(WELL_FORMED)
    } else {
        CheckReport::fail(WELL_FORMED, render_violations(&v))
    }
}

/// The start-symbol expansion: the non-book facts of the state plus the two
/// active price lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Gen0 {
    pub queue: Vec<QueuedOrder>,
    pub buy_prices: Vec<Price>,
    pub sell_prices: Vec<Price>,
    pub time: LogicalTime,
}

/// One expansion of a per-side nonterminal, producing the price queue for
/// `price`. `fifo` is the grammar's free list variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GenStep {
    pub price: Price,
    pub fifo: Vec<ResidentEntry>,
}

/// A derivation of a state in the no-locked-or-crossed grammar.
///
/// The start rule emits the queue, both price lists and the clock, guarded by
/// `max(buy_prices) < min(sell_prices)`. Each buy step then consumes the head
/// of the remaining buy list and emits its price queue; the empty list ends
/// the recursion. Sell steps likewise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GrammarDerivation {
    pub gen0: Gen0,
    pub buy_steps: Vec<GenStep>,
    pub sell_steps: Vec<GenStep>,
}

impl GrammarDerivation {
    /// The start rule's guard. Vacuously true when either list is empty.
    pub fn guard_holds(&self) -> bool {
        match (
            self.gen0.buy_prices.iter().max(),
            self.gen0.sell_prices.iter().min(),
        ) {
            (Some(b), Some(s)) => b < s,
            _ => true,
        }
    }

    /// Steps consume the price lists in order, one step per price.
    pub fn steps_follow_lists(&self) -> bool {
        let follows = |prices: &[Price], steps: &[GenStep]| {
            prices.len() == steps.len() && prices.iter().zip(steps).all(|(p, s)| *p == s.price)
        };
        follows(&self.gen0.buy_prices, &self.buy_steps)
            && follows(&self.gen0.sell_prices, &self.sell_steps)
    }

    /// Replays the derivation and returns the context it generates.
    pub fn generate(&self) -> MarketState {
        let side = |side: Side, prices: &[Price], steps: &[GenStep]| {
            let mut book = BookSide::new(side);
            book.active_prices = prices.iter().copied().collect();
            for s in steps {
                book.levels.insert(
                    s.price,
                    PriceLevel {
                        price: s.price,
                        fifo: s.fifo.iter().copied().collect(),
                    },
                );
            }
            book
        };
        MarketState {
            order_queue: self.gen0.queue.iter().copied().collect(),
            buy: side(Side::Buy, &self.gen0.buy_prices, &self.buy_steps),
            sell: side(Side::Sell, &self.gen0.sell_prices, &self.sell_steps),
            now: self.gen0.time,
        }
    }
}

/// Builds a derivation of `state` if it is in the grammar's language.
///
/// `Ok(None)` means the state is well formed but the start guard fails (the
/// market is locked or crossed). Ill-formed states are an error.
pub fn derive_membership(state: &MarketState) -> Result<Option<GrammarDerivation>, CheckError> {
    let v = state.well_formed();
    if !v.is_empty() {
        return Err(CheckError::IllFormed(v));
    }
    let steps = |book: &BookSide| -> Vec<GenStep> {
        book.active_prices
            .iter()
            .map(|p| GenStep {
                price: *p,
                fifo: book.levels[p].fifo.iter().copied().collect(),
            })
            .collect()
    };
    let derivation = GrammarDerivation {
        gen0: Gen0 {
            queue: state.order_queue.iter().copied().collect(),
            buy_prices: state.buy.active_prices.iter().copied().collect(),
            sell_prices: state.sell.active_prices.iter().copied().collect(),
            time: state.now,
        },
        buy_steps: steps(&state.buy),
        sell_steps: steps(&state.sell),
    };
    if !derivation.guard_holds() {
        return Ok(None);
    }
    debug_assert!(derivation.steps_follow_lists());
    if derivation.generate() != *state {
        return Err(CheckError::MalformedTrace(
            "derivation does not regenerate the state".into(),
        ));
    }
    Ok(Some(derivation))
}

/// bid < ask, read straight off the book. Vacuous when a side is empty.
pub fn direct_nlc(state: &MarketState) -> bool {
    match (state.best_bid(), state.best_ask()) {
        (Some(b), Some(a)) => b < a,
        _ => true,
    }
}

/// No locked or crossed market. Passes only when both the grammar route and
/// the direct comparison accept the state.
pub fn check_nlc(state: &MarketState) -> Result<CheckReport, CheckError> {
    let by_grammar = derive_membership(state)?.is_some();
    let direct = direct_nlc(state);
    Ok(match (by_grammar, direct) {
        (true, true) => CheckReport::pass(NLC),
        (false, false) => CheckReport::fail(
            NLC,
            format!(
                "bid {} >= ask {}",
                state.best_bid().map_or("-".into(), |p| p.to_string()),
                state.best_ask().map_or("-".into(), |p| p.to_string())
            ),
        ),
        _ => CheckReport::fail(
            NLC,
            format!("grammar says {by_grammar}, direct comparison says {direct}"),
        ),
    })
}

/// The grammar route and the direct comparison agree on `state`.
pub fn check_grammar_oracle(state: &MarketState) -> Result<CheckReport, CheckError> {
    let by_grammar = derive_membership(state)?.is_some();
    let direct = direct_nlc(state);
    Ok(if by_grammar == direct {
        CheckReport::pass(GRAMMAR_ORACLE)
    } else {
        CheckReport::fail(
            GRAMMAR_ORACLE,
            format!("grammar={by_grammar} direct={direct}"),
        )
    })
}

/// Clock moves by one exactly when the event says so, and the event says so
/// for every rule except the four partial-fill rules.
pub fn check_time_discipline(
    pre: &MarketState,
    post: &MarketState,
    ev: &TransitionEvent,
) -> CheckReport {
    let expected = ev.rule.advances_time();
    let moved = post.now.0 == pre.now.0 + 1;
    let still = post.now == pre.now;
    if ev.time_advanced != expected {
        return CheckReport::fail(
            TIME_DISCIPLINE,
            format!(
                "{} reported time_advanced={} but should be {}",
                ev.rule, ev.time_advanced, expected
            ),
        );
    }
    if (expected && !moved) || (!expected && !still) {
        return CheckReport::fail(
            TIME_DISCIPLINE,
            format!(
                "{} moved the clock from {} to {}",
                ev.rule, pre.now, post.now
            ),
        );
    }
    CheckReport::pass(TIME_DISCIPLINE)
}

fn require_fill(
    check: &'static str,
    ev: &TransitionEvent,
) -> Result<crate::engine::Fill, CheckError> {
    ev.fill.ok_or(CheckError::NotAFill {
        check,
        rule: ev.rule,
    })
}

/// Only the price queues at the fill price may change in an exchange.
pub fn check_exchange_locality(
    pre: &MarketState,
    post: &MarketState,
    ev: &TransitionEvent,
) -> Result<CheckReport, CheckError> {
    let fill = require_fill(EXCHANGE_LOCALITY, ev)?;
    for side in Side::ALL {
        let (a, b) = (pre.side(side), post.side(side));
        let prices: BTreeSet<Price> = a.levels.keys().chain(b.levels.keys()).copied().collect();
        for p in prices.into_iter().filter(|p| *p != fill.price) {
            if a.level(p) != b.level(p) {
                return Ok(CheckReport::fail(
                    EXCHANGE_LOCALITY,
                    format!(
                        "{} at {}: {side} level {p} changed from {:?} to {:?}",
                        ev.rule,
                        fill.price,
                        a.level(p).map(fifo_ids),
                        b.level(p).map(fifo_ids)
                    ),
                ));
            }
        }
    }
    Ok(CheckReport::pass(EXCHANGE_LOCALITY))
}

fn fifo_ids(level: &PriceLevel) -> Vec<(u64, u64)> {
    level.fifo.iter().map(|e| (e.id.0, e.qty.0)).collect()
}

/// An incoming buy trades at the ask, an incoming sell at the bid.
pub fn check_fill_at_bid_or_ask(
    pre: &MarketState,
    ev: &TransitionEvent,
) -> Result<CheckReport, CheckError> {
    let fill = require_fill(FILL_AT_BID_OR_ASK, ev)?;
    let (label, quote) = match fill.incoming_side {
        Side::Buy => ("ask", pre.best_ask()),
        Side::Sell => ("bid", pre.best_bid()),
    };
    Ok(if quote == Some(fill.price) {
        CheckReport::pass(FILL_AT_BID_OR_ASK)
    } else {
        CheckReport::fail(
            FILL_AT_BID_OR_ASK,
            format!(
                "incoming {} {} filled at {} but {label} was {}",
                fill.incoming_side,
                fill.incoming_id,
                fill.price,
                quote.map_or("-".into(), |p| p.to_string())
            ),
        )
    })
}

fn check_chained(trace: &[TraceStep]) -> Result<(), CheckError> {
    for (i, w) in trace.windows(2).enumerate() {
        if w[0].post != w[1].pre {
            return Err(CheckError::MalformedTrace(format!(
                "step {} does not start where step {i} ended",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Every fill takes the earliest resident at the best opposite price, and an
/// incoming order's consecutive fills never move to a better price for it.
pub fn check_price_time_priority(trace: &[TraceStep]) -> Result<CheckReport, CheckError> {
    check_chained(trace)?;
    let mut last: Option<(OrderId, Price)> = None;
    for (i, step) in trace.iter().enumerate() {
        let Some(fill) = step.event.fill else {
            last = None;
            continue;
        };
        let book = step.pre.side(fill.incoming_side.dual());
        let best = book.best();
        let head = best.and_then(|p| book.level(p)).and_then(|l| l.head());
        if best != Some(fill.price) {
            return Ok(CheckReport::fail(
                PRICE_TIME_PRIORITY,
                format!(
                    "step {i}: {} filled at {} while best {} price was {}",
                    fill.incoming_id,
                    fill.price,
                    book.side,
                    best.map_or("-".into(), |p| p.to_string())
                ),
            ));
        }
        if head.map(|h| h.id) != Some(fill.resting_id) {
            return Ok(CheckReport::fail(
                PRICE_TIME_PRIORITY,
                format!(
                    "step {i}: resident {} filled ahead of {} at {}",
                    fill.resting_id,
                    head.map_or("-".into(), |h| h.id.to_string()),
                    fill.price
                ),
            ));
        }
        if let Some((prev_id, prev_price)) = last {
            let worsened = match fill.incoming_side {
                Side::Buy => fill.price < prev_price,
                Side::Sell => fill.price > prev_price,
            };
            if prev_id == fill.incoming_id && worsened {
                return Ok(CheckReport::fail(
                    PRICE_TIME_PRIORITY,
                    format!(
                        "step {i}: {} filled at {} after {}",
                        fill.incoming_id, fill.price, prev_price
                    ),
                ));
            }
        }
        last = Some((fill.incoming_id, fill.price));
    }
    Ok(CheckReport::pass(PRICE_TIME_PRIORITY))
}

/// Quantity is neither created nor lost.
///
/// Per fill, the incoming and resting orders each give up exactly the filled
/// quantity. Per order id over the whole trace, opening quantity plus
/// submissions equals fills plus discards plus what is still open at the end.
pub fn check_conservation(trace: &[TraceStep]) -> Result<CheckReport, CheckError> {
    check_chained(trace)?;
    let Some(first) = trace.first() else {
        return Ok(CheckReport::pass(CONSERVATION));
    };
    let last = &trace[trace.len() - 1].post;

    let mut ids: BTreeSet<OrderId> = BTreeSet::new();
    for book in [&first.pre.buy, &first.pre.sell] {
        ids.extend(
            book.levels
                .values()
                .flat_map(|l| l.fifo.iter().map(|e| e.id)),
        );
    }
    ids.extend(first.pre.order_queue.iter().map(|o| o.id));

    // (in, out) per id
    let mut ledger: BTreeMap<OrderId, (u64, u64)> = BTreeMap::new();
    for id in &ids {
        ledger.insert(*id, (first.pre.open_qty(*id), 0));
    }

    for (i, step) in trace.iter().enumerate() {
        let ev = &step.event;
        match ev.rule {
            Rule::Enqueue if ev.kind != OrderKind::Cancel => {
                let q = step.post.order_queue.back().map(|o| o.qty.0).unwrap_or(0);
                ledger.entry(ev.order_id).or_default().0 += q;
            }
            _ => {}
        }
        if let Some(d) = ev.discarded {
            ledger.entry(ev.order_id).or_default().1 += d.0;
        }
        if let Some(fill) = ev.fill {
            if fill.qty.0 == 0 {
                return Ok(CheckReport::fail(
                    CONSERVATION,
                    format!("step {i}: zero-quantity fill"),
                ));
            }
            let incoming_before = step.pre.order_queue.front().map(|o| o.qty.0).unwrap_or(0);
            let resting_before = step
                .pre
                .side(fill.incoming_side.dual())
                .level(fill.price)
                .and_then(|l| l.fifo.iter().find(|e| e.id == fill.resting_id))
                .map(|e| e.qty.0)
                .unwrap_or(0);
            let incoming_used = incoming_before.checked_sub(fill.incoming_remainder.0);
            let resting_used = resting_before.checked_sub(fill.resting_remainder.0);
            if incoming_used != Some(fill.qty.0) || resting_used != Some(fill.qty.0) {
                return Ok(CheckReport::fail(
                    CONSERVATION,
                    format!(
                        "step {i}: fill of {} but incoming gave {:?} and resting gave {:?}",
                        fill.qty, incoming_used, resting_used
                    ),
                ));
            }
            ledger.entry(fill.incoming_id).or_default().1 += fill.qty.0;
            ledger.entry(fill.resting_id).or_default().1 += fill.qty.0;
        }
    }

    for (id, (inflow, outflow)) in &ledger {
        let open = last.open_qty(*id);
        if *inflow != outflow + open {
            return Ok(CheckReport::fail(
                CONSERVATION,
                format!(
                    "order {id}: {inflow} in, {outflow} filled or discarded, {open} still open"
                ),
            ));
        }
    }
    Ok(CheckReport::pass(CONSERVATION))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Engine, EngineOptions, Fault, Fill};
    use crate::market::{IncomingOrder, Qty, StateBuilder};

    fn book(buys: &[u64], sells: &[u64]) -> MarketState {
        let mut b = StateBuilder::new();
        let mut id = 0;
        for p in buys {
            b = b.resident(Side::Buy, *p, 1, id);
            id += 1;
        }
        for p in sells {
            b = b.resident(Side::Sell, *p, 1, id);
            id += 1;
        }
        b.build()
    }

    fn traced(state: &MarketState, orders: &[IncomingOrder]) -> Vec<TraceStep> {
        traced_with(Engine::default(), state, orders)
    }

    fn traced_with(e: Engine, state: &MarketState, orders: &[IncomingOrder]) -> Vec<TraceStep> {
        let mut cur = state.clone();
        let mut out = Vec::new();
        for o in orders {
            let (next, event) = e.submit(&cur, *o).unwrap();
            out.push(TraceStep {
                pre: cur,
                event,
                post: next.clone(),
            });
            cur = next;
        }
        let (_, steps) = e.run_traced(&cur).unwrap();
        out.extend(steps);
        out
    }

    fn fill_step(trace: &[TraceStep]) -> &TraceStep {
        trace.iter().find(|s| s.event.fill.is_some()).unwrap()
    }

    #[test]
    fn init_derivation_is_empty() {
        let d = derive_membership(&MarketState::init()).unwrap().unwrap();
        assert!(d.buy_steps.is_empty() && d.sell_steps.is_empty());
        assert_eq!(d.generate(), MarketState::init());
    }

    #[test]
    fn derivation_for_separated_book() {
        let s = book(&[3, 5], &[7]);
        let d = derive_membership(&s).unwrap().unwrap();
        assert_eq!(d.gen0.buy_prices, vec![Price(3), Price(5)]);
        assert_eq!(d.buy_steps.len(), 2);
        assert_eq!(d.sell_steps.len(), 1);
        assert!(d.guard_holds());
        assert!(d.steps_follow_lists());
        assert_eq!(d.generate(), s);
    }

    #[test]
    fn locked_book_is_not_derivable() {
        assert!(derive_membership(&book(&[5], &[5])).unwrap().is_none());
    }

    #[test]
    fn ill_formed_state_is_an_error() {
        let mut s = MarketState::init();
        s.buy.active_prices.insert(Price(1));
        assert!(matches!(
            derive_membership(&s),
            Err(CheckError::IllFormed(_))
        ));
        assert!(check_nlc(&s).is_err());
    }

    #[test]
    fn nlc_examples() {
        assert!(check_nlc(&book(&[3, 5], &[7])).unwrap().pass);
        assert!(check_nlc(&book(&[], &[2])).unwrap().pass);
        let r = check_nlc(&book(&[6], &[5])).unwrap();
        assert!(!r.pass);
        assert_eq!(r.counterexample.as_deref(), Some("bid 6 >= ask 5"));
        assert!(check_grammar_oracle(&book(&[6], &[5])).unwrap().pass);
    }

    #[test]
    fn locality_on_full_match_with_untouched_level() {
        let s = StateBuilder::new()
            .resident(Side::Sell, 10, 5, 1)
            .resident(Side::Sell, 12, 2, 3)
            .build();
        let t = traced(&s, &[IncomingOrder::limit(Side::Buy, 10, 5, 2)]);
        let f = fill_step(&t);
        assert_eq!(f.event.rule, Rule::Limit1);
        assert!(
            check_exchange_locality(&f.pre, &f.post, &f.event)
                .unwrap()
                .pass
        );
    }

    #[test]
    fn locality_on_partial_resident_fill() {
        let s = StateBuilder::new()
            .resident(Side::Sell, 10, 10, 1)
            .resident(Side::Buy, 4, 1, 3)
            .build();
        let t = traced(&s, &[IncomingOrder::limit(Side::Buy, 10, 4, 2)]);
        let f = fill_step(&t);
        assert_eq!(f.event.rule, Rule::Limit5);
        assert!(
            check_exchange_locality(&f.pre, &f.post, &f.event)
                .unwrap()
                .pass
        );
    }

    #[test]
    fn locality_catches_unrelated_mutation() {
        let s = StateBuilder::new()
            .resident(Side::Sell, 10, 5, 1)
            .resident(Side::Sell, 12, 2, 3)
            .build();
        let t = traced(&s, &[IncomingOrder::limit(Side::Buy, 10, 5, 2)]);
        let f = fill_step(&t);
        let mut bad = f.post.clone();
        bad.sell.levels.get_mut(&Price(12)).unwrap().fifo[0].qty = Qty(1);
        let r = check_exchange_locality(&f.pre, &bad, &f.event).unwrap();
        assert!(!r.pass);
        assert!(r.counterexample.unwrap().contains("level 12"));
    }

    #[test]
    fn non_fill_events_are_rejected() {
        let t = traced(
            &MarketState::init(),
            &[IncomingOrder::limit(Side::Buy, 1, 1, 1)],
        );
        let s = &t[1];
        assert!(matches!(
            check_exchange_locality(&s.pre, &s.post, &s.event),
            Err(CheckError::NotAFill { .. })
        ));
        assert!(check_fill_at_bid_or_ask(&s.pre, &s.event).is_err());
    }

    #[test]
    fn fill_price_examples() {
        let t = traced(
            &book(&[], &[5, 8]),
            &[IncomingOrder::limit(Side::Buy, 6, 1, 10)],
        );
        let f = fill_step(&t);
        assert_eq!(f.pre.best_ask(), Some(Price(5)));
        assert!(check_fill_at_bid_or_ask(&f.pre, &f.event).unwrap().pass);

        let t = traced(
            &book(&[9, 2], &[]),
            &[IncomingOrder::limit(Side::Sell, 1, 1, 10)],
        );
        let f = fill_step(&t);
        assert_eq!(f.event.fill.unwrap().price, Price(9));
        assert!(check_fill_at_bid_or_ask(&f.pre, &f.event).unwrap().pass);

        let mut ev = f.event.clone();
        ev.fill = Some(Fill {
            price: Price(2),
            ..ev.fill.unwrap()
        });
        assert!(!check_fill_at_bid_or_ask(&f.pre, &ev).unwrap().pass);
    }

    #[test]
    fn priority_takes_earliest_first() {
        let s = StateBuilder::new()
            .resident(Side::Sell, 10, 1, 1)
            .resident(Side::Sell, 10, 1, 2)
            .build();
        let t = traced(&s, &[IncomingOrder::market(Side::Buy, 2, 3)]);
        let fills: Vec<_> = t
            .iter()
            .filter_map(|s| s.event.fill)
            .map(|f| f.resting_id)
            .collect();
        assert_eq!(fills, vec![OrderId(1), OrderId(2)]);
        assert!(check_price_time_priority(&t).unwrap().pass);
    }

    #[test]
    fn priority_walks_prices_outward() {
        let s = StateBuilder::new()
            .resident(Side::Sell, 12, 1, 1)
            .resident(Side::Sell, 10, 1, 2)
            .build();
        let t = traced(&s, &[IncomingOrder::limit(Side::Buy, 12, 2, 3)]);
        let prices: Vec<_> = t
            .iter()
            .filter_map(|s| s.event.fill)
            .map(|f| f.price)
            .collect();
        assert_eq!(prices, vec![Price(10), Price(12)]);
        assert!(check_price_time_priority(&t).unwrap().pass);
    }

    #[test]
    fn priority_catches_later_arrival_first() {
        let s = StateBuilder::new()
            .resident(Side::Sell, 10, 1, 1)
            .resident(Side::Sell, 10, 1, 2)
            .build();
        let mut t = traced(&s, &[IncomingOrder::market(Side::Buy, 1, 3)]);
        let i = t.iter().position(|s| s.event.fill.is_some()).unwrap();
        let mut f = t[i].event.fill.unwrap();
        f.resting_id = OrderId(2);
        t[i].event.fill = Some(f);
        let r = check_price_time_priority(&t).unwrap();
        assert!(!r.pass);
        assert!(r
            .counterexample
            .unwrap()
            .contains("resident 2 filled ahead of 1"));
    }

    #[test]
    fn priority_catches_worst_price_engine() {
        let e = Engine::new(EngineOptions {
            fault: Some(Fault::WorstPrice),
            ..Default::default()
        });
        let t = traced_with(
            e,
            &book(&[], &[1, 2]),
            &[IncomingOrder::limit(Side::Buy, 2, 1, 9)],
        );
        assert!(!check_price_time_priority(&t).unwrap().pass);
    }

    #[test]
    fn broken_chain_is_malformed() {
        let t1 = traced(
            &MarketState::init(),
            &[IncomingOrder::limit(Side::Buy, 1, 1, 1)],
        );
        let t2 = traced(
            &MarketState::init(),
            &[IncomingOrder::limit(Side::Sell, 4, 1, 2)],
        );
        let spliced = vec![t1[0].clone(), t2[1].clone()];
        assert!(matches!(
            check_price_time_priority(&spliced),
            Err(CheckError::MalformedTrace(_))
        ));
    }

    #[test]
    fn conservation_matched_pair() {
        let t = traced(
            &MarketState::init(),
            &[
                IncomingOrder::limit(Side::Buy, 5, 5, 1),
                IncomingOrder::limit(Side::Sell, 5, 5, 2),
            ],
        );
        assert!(check_conservation(&t).unwrap().pass);
        let end = &t.last().unwrap().post;
        assert_eq!(end.open_qty(OrderId(1)) + end.open_qty(OrderId(2)), 0);
    }

    #[test]
    fn conservation_unmatched_and_discarded() {
        let t = traced(
            &MarketState::init(),
            &[IncomingOrder::limit(Side::Buy, 5, 3, 1)],
        );
        assert!(check_conservation(&t).unwrap().pass);
        assert_eq!(t.last().unwrap().post.open_qty(OrderId(1)), 3);

        let t = traced(
            &MarketState::init(),
            &[IncomingOrder::market(Side::Sell, 4, 1)],
        );
        assert_eq!(t.last().unwrap().event.discarded, Some(Qty(4)));
        assert!(check_conservation(&t).unwrap().pass);
    }

    #[test]
    fn conservation_catches_inflated_fill() {
        let mut t = traced(
            &MarketState::init(),
            &[
                IncomingOrder::limit(Side::Buy, 5, 5, 1),
                IncomingOrder::limit(Side::Sell, 5, 3, 2),
            ],
        );
        let i = t.iter().position(|s| s.event.fill.is_some()).unwrap();
        let mut f = t[i].event.fill.unwrap();
        f.qty = Qty(4);
        t[i].event.fill = Some(f);
        assert!(!check_conservation(&t).unwrap().pass);
    }

    #[test]
    fn time_discipline_examples() {
        let s = StateBuilder::new()
            .resident(Side::Sell, 10, 3, 1)
            .queued(IncomingOrder::market(Side::Buy, 5, 3))
            .build();
        let (post, ev) = Engine::default().step(&s).unwrap().unwrap();
        assert_eq!(ev.rule, Rule::Market3);
        assert!(check_time_discipline(&s, &post, &ev).pass);
        let mut lying = ev.clone();
        lying.time_advanced = true;
        assert!(!check_time_discipline(&s, &post, &lying).pass);
        let mut bumped = post.clone();
        bumped.now = bumped.now.succ();
        assert!(!check_time_discipline(&s, &bumped, &ev).pass);
    }
}
