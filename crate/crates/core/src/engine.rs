//! The transition rules.
//!
//! Every call to [`Engine::step`] applies exactly one rule to the order at the
//! front of the queue. Exchanges consume one resident entry per step, so a
//! large incoming order that sweeps several residents shows up as several
//! events. The clock advances only when the front order leaves the queue.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guards;
use crate::market::{
    IncomingOrder, LogicalTime, MarketState, OrderId, OrderKind, Price, Qty, QueuedOrder,
    ResidentEntry, Side, MAX_PRICE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    #[serde(rename = "begin")]
    Begin,
    #[serde(rename = "enqueue")]
    Enqueue,
    #[serde(rename = "limit/empty")]
    LimitEmpty,
    #[serde(rename = "limit/queue")]
    LimitQueue,
    #[serde(rename = "limit/1")]
    Limit1,
    #[serde(rename = "limit/2")]
    Limit2,
    #[serde(rename = "limit/3")]
    Limit3,
    #[serde(rename = "limit/4")]
    Limit4,
    #[serde(rename = "limit/5")]
    Limit5,
    #[serde(rename = "market/empty")]
    MarketEmpty,
    #[serde(rename = "market/1")]
    Market1,
    #[serde(rename = "market/2")]
    Market2,
    #[serde(rename = "market/3")]
    Market3,
    #[serde(rename = "market/4")]
    Market4,
    #[serde(rename = "market/5")]
    Market5,
    #[serde(rename = "cancel/inListNil")]
    CancelInListNil,
    #[serde(rename = "cancel/inListCons")]
    CancelInListCons,
    #[serde(rename = "cancel/notInListQueue")]
    CancelNotInListQueue,
    #[serde(rename = "cancel/notInListActive")]
    CancelNotInListActive,
}

impl Rule {
    /// The seventeen rules that act on the front of the order queue.
    pub const MATCHING: [Rule; 17] = [
        Rule::LimitEmpty,
        Rule::LimitQueue,
        Rule::Limit1,
        Rule::Limit2,
        Rule::Limit3,
        Rule::Limit4,
        Rule::Limit5,
        Rule::MarketEmpty,
        Rule::Market1,
        Rule::Market2,
        Rule::Market3,
        Rule::Market4,
        Rule::Market5,
        Rule::CancelInListNil,
        Rule::CancelInListCons,
        Rule::CancelNotInListQueue,
        Rule::CancelNotInListActive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Begin => "begin",
            Rule::Enqueue => "enqueue",
            Rule::LimitEmpty => "limit/empty",
            Rule::LimitQueue => "limit/queue",
            Rule::Limit1 => "limit/1",
            Rule::Limit2 => "limit/2",
            Rule::Limit3 => "limit/3",
            Rule::Limit4 => "limit/4",
            Rule::Limit5 => "limit/5",
            Rule::MarketEmpty => "market/empty",
            Rule::Market1 => "market/1",
            Rule::Market2 => "market/2",
            Rule::Market3 => "market/3",
            Rule::Market4 => "market/4",
            Rule::Market5 => "market/5",
            Rule::CancelInListNil => "cancel/inListNil",
            Rule::CancelInListCons => "cancel/inListCons",
            Rule::CancelNotInListQueue => "cancel/notInListQueue",
            Rule::CancelNotInListActive => "cancel/notInListActive",
        }
    }

    pub fn from_name(name: &str) -> Option<Rule> {
        std::iter::once(Rule::Begin)
            .chain(std::iter::once(Rule::Enqueue))
            .chain(Rule::MATCHING)
            .find(|r| r.name() == name)
    }

    pub fn is_exchange(self) -> bool {
        matches!(
            self,
            Rule::Limit1
                | Rule::Limit2
                | Rule::Limit3
                | Rule::Limit4
                | Rule::Limit5
                | Rule::Market1
                | Rule::Market2
                | Rule::Market3
                | Rule::Market4
                | Rule::Market5
        )
    }

    /// Partial fills of the incoming order keep it at the queue front and
    /// leave the clock alone.
    pub fn advances_time(self) -> bool {
        !matches!(
            self,
            Rule::Limit3 | Rule::Limit4 | Rule::Market3 | Rule::Market4
        )
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One exchange between the incoming order and the resident with priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fill {
    pub resting_id: OrderId,
    pub incoming_id: OrderId,
    pub incoming_side: Side,
    pub price: Price,
    pub qty: Qty,
    /// Zero when the resident was fully consumed.
    pub resting_remainder: Qty,
    pub incoming_remainder: Qty,
}

/// Extra annotation attached to some no-op cancels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventFlag {
    /// The cancel found nothing at the stated side and price, but the id is
    /// resident somewhere else in the book.
    CancelTargetElsewhere,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub rule: Rule,
    pub order_id: OrderId,
    pub kind: OrderKind,
    pub side: Side,
    pub fill: Option<Fill>,
    /// Quantity that left the system without trading: the unfilled part of a
    /// market order with no counterpart, or a cancelled resident.
    pub discarded: Option<Qty>,
    pub time_advanced: bool,
    pub pre_time: LogicalTime,
    pub post_time: LogicalTime,
    pub flag: Option<EventFlag>,
}

/// How the unfilled part of a market order is re-queued after a partial fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarketRemainder {
    /// Stays a market order and keeps sweeping the book.
    #[default]
    Market,
    /// Becomes a limit order at the market order's nominal price.
    Limit,
}

/// Deliberate engine defects, used to show that the checkers can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// `limit/1` drops the emptied level but leaves its price active.
    SkipPriceRemoval,
    /// Limit orders always rest, even when they could trade.
    IgnoreStoreGuard,
    /// Exchanges happen at the worst acceptable opposite price.
    WorstPrice,
}

impl Fault {
    pub const ALL: [Fault; 3] = [
        Fault::SkipPriceRemoval,
        Fault::IgnoreStoreGuard,
        Fault::WorstPrice,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fault::SkipPriceRemoval => "skip-price-removal",
            Fault::IgnoreStoreGuard => "ignore-store-guard",
            Fault::WorstPrice => "worst-price",
        }
    }

    pub fn from_name(name: &str) -> Option<Fault> {
        Fault::ALL.into_iter().find(|f| f.name() == name)
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_STEP_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EngineOptions {
    pub market_remainder: MarketRemainder,
    /// Cancel a singleton level only when the cancel's qty equals the
    /// resident's.
    pub cancel_match_qty: bool,
    pub fault: Option<Fault>,
    /// Most steps one drain may take before it counts as runaway.
    pub step_budget: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            market_remainder: MarketRemainder::Market,
            cancel_match_qty: false,
            fault: None,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum EngineError {
    #[error("order {id}: {kind} orders need a positive quantity")]
    ZeroQty { id: OrderId, kind: OrderKind },
    #[error("order {id}: price {price} exceeds the maximum {max}")]
    PriceOutOfRange { id: OrderId, price: Price, max: u64 },
    #[error("{side} price {price} is active but has no price level")]
    MissingLevel { side: Side, price: Price },
    #[error("{side} price level {price} is empty")]
    EmptyLevel { side: Side, price: Price },
    #[error("step budget of {budget} exhausted before quiescence")]
    StepBudgetExhausted { budget: usize },
}

/// A transition together with the states on either side of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub pre: MarketState,
    pub event: TransitionEvent,
    pub post: MarketState,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Engine {
    opts: EngineOptions,
}

impl Engine {
    pub fn new(opts: EngineOptions) -> Self {
        Engine { opts }
    }

    pub fn options(&self) -> &EngineOptions {
        &self.opts
    }

    /// Timestamps `order` with the current clock and appends it to the queue.
    pub fn submit(
        &self,
        state: &MarketState,
        order: IncomingOrder,
    ) -> Result<(MarketState, TransitionEvent), EngineError> {
        let mut next = state.clone();
        let ev = self.submit_mut(&mut next, order)?;
        Ok((next, ev))
    }

    pub fn submit_mut(
        &self,
        state: &mut MarketState,
        order: IncomingOrder,
    ) -> Result<TransitionEvent, EngineError> {
        if order.kind != OrderKind::Cancel && order.qty.0 == 0 {
            return Err(EngineError::ZeroQty {
                id: order.id,
                kind: order.kind,
            });
        }
        if order.price.0 > MAX_PRICE {
            return Err(EngineError::PriceOutOfRange {
                id: order.id,
                price: order.price,
                max: MAX_PRICE,
            });
        }
        let pre_time = state.now;
        state.order_queue.push_back(order.stamped(pre_time));
        state.now = pre_time.succ();
        Ok(TransitionEvent {
            rule: Rule::Enqueue,
            order_id: order.id,
            kind: order.kind,
            side: order.side,
            fill: None,
            discarded: None,
            time_advanced: true,
            pre_time,
            post_time: state.now,
            flag: None,
        })
    }

    /// Applies one rule to the front order. `Ok(None)` when the queue is empty.
    pub fn step(
        &self,
        state: &MarketState,
    ) -> Result<Option<(MarketState, TransitionEvent)>, EngineError> {
        let mut next = state.clone();
        Ok(self.step_mut(&mut next)?.map(|ev| (next, ev)))
    }

    /// In-place variant of [`Engine::step`]. On error `state` is left unchanged.
    pub fn step_mut(
        &self,
        state: &mut MarketState,
    ) -> Result<Option<TransitionEvent>, EngineError> {
        let Some(front) = state.order_queue.front().copied() else {
            return Ok(None);
        };
        let ev = match front.kind {
            OrderKind::Limit => self.step_limit(state, front)?,
            OrderKind::Market => self.step_market(state, front)?,
            OrderKind::Cancel => self.step_cancel(state, front)?,
        };
        Ok(Some(ev))
    }

    pub fn run_to_quiescence(
        &self,
        state: &MarketState,
    ) -> Result<(MarketState, Vec<TransitionEvent>), EngineError> {
        let mut cur = state.clone();
        let mut events = Vec::new();
        while let Some(ev) = self.step_mut(&mut cur)? {
            events.push(ev);
            if events.len() >= self.opts.step_budget && !cur.is_quiescent() {
                return Err(EngineError::StepBudgetExhausted {
                    budget: self.opts.step_budget,
                });
            }
        }
        Ok((cur, events))
    }

    /// Like [`Engine::run_to_quiescence`] but keeps every intermediate state.
    pub fn run_traced(
        &self,
        state: &MarketState,
    ) -> Result<(MarketState, Vec<TraceStep>), EngineError> {
        let mut cur = state.clone();
        let mut steps = Vec::new();
        while let Some((next, event)) = self.step(&cur)? {
            steps.push(TraceStep {
                pre: cur,
                event,
                post: next.clone(),
            });
            cur = next;
            if steps.len() >= self.opts.step_budget && !cur.is_quiescent() {
                return Err(EngineError::StepBudgetExhausted {
                    budget: self.opts.step_budget,
                });
            }
        }
        Ok((cur, steps))
    }

    fn step_limit(
        &self,
        state: &mut MarketState,
        front: QueuedOrder,
    ) -> Result<TransitionEvent, EngineError> {
        let opposite = &state.side(front.side.dual()).active_prices;
        let matched = if self.opts.fault == Some(Fault::IgnoreStoreGuard) {
            None
        } else if self.opts.fault == Some(Fault::WorstPrice) {
            worst_acceptable(front.side, opposite, Some(front.price))
        } else {
            guards::exchange_price(front.side, opposite, front.price)
        };
        match matched {
            Some(x) => self.exchange(state, front, x),
            None => Ok(rest(state, front)),
        }
    }

    fn step_market(
        &self,
        state: &mut MarketState,
        front: QueuedOrder,
    ) -> Result<TransitionEvent, EngineError> {
        let opposite = &state.side(front.side.dual()).active_prices;
        let best = if self.opts.fault == Some(Fault::WorstPrice) {
            worst_acceptable(front.side, opposite, None)
        } else {
            guards::market_exchange_price(front.side, opposite)
        };
        match best {
            Some(y) => self.exchange(state, front, y),
            None => {
                let pre_time = state.now;
                state.order_queue.pop_front();
                state.now = pre_time.succ();
                Ok(event(Rule::MarketEmpty, front, pre_time, state.now).discarded(front.qty))
            }
        }
    }

    /// Trades the front order against the head resident at `x` on the
    /// opposite side.
    fn exchange(
        &self,
        state: &mut MarketState,
        front: QueuedOrder,
        x: Price,
    ) -> Result<TransitionEvent, EngineError> {
        let rest_side = front.side.dual();
        let book = state.side(rest_side);
        let level = book.level(x).ok_or(EngineError::MissingLevel {
            side: rest_side,
            price: x,
        })?;
        let head = *level.head().ok_or(EngineError::EmptyLevel {
            side: rest_side,
            price: x,
        })?;
        let last = level.len() == 1;
        let market = front.kind == OrderKind::Market;
        let pre_time = state.now;

        let incoming = front.qty.0;
        let resting = head.qty.0;
        let traded = incoming.min(resting);
        let fill = Fill {
            resting_id: head.id,
            incoming_id: front.id,
            incoming_side: front.side,
            price: x,
            qty: Qty(traded),
            resting_remainder: Qty(resting - traded),
            incoming_remainder: Qty(incoming - traded),
        };

        let book = state.side_mut(rest_side);
        let rule = if incoming < resting {
            let lvl = book.levels.get_mut(&x).expect("level checked above");
            lvl.fifo[0].qty = Qty(resting - incoming);
            if market {
                Rule::Market5
            } else {
                Rule::Limit5
            }
        } else {
            if last {
                book.levels.remove(&x);
                let keep_price = self.opts.fault == Some(Fault::SkipPriceRemoval)
                    && incoming == resting
                    && !market;
                if !keep_price {
                    book.active_prices.remove(&x);
                }
            } else {
                book.levels
                    .get_mut(&x)
                    .expect("level checked above")
                    .fifo
                    .pop_front();
            }
            match (incoming == resting, last, market) {
                (true, true, false) => Rule::Limit1,
                (true, false, false) => Rule::Limit2,
                (false, true, false) => Rule::Limit3,
                (false, false, false) => Rule::Limit4,
                (true, true, true) => Rule::Market1,
                (true, false, true) => Rule::Market2,
                (false, true, true) => Rule::Market3,
                (false, false, true) => Rule::Market4,
            }
        };

        if rule.advances_time() {
            state.order_queue.pop_front();
            state.now = pre_time.succ();
        } else {
            let q = state.order_queue.front_mut().expect("front order present");
            q.qty = Qty(incoming - resting);
            if market && self.opts.market_remainder == MarketRemainder::Limit {
                q.kind = OrderKind::Limit;
            }
        }
        let mut ev = event(rule, front, pre_time, state.now);
        ev.fill = Some(fill);
        Ok(ev)
    }

    fn step_cancel(
        &self,
        state: &mut MarketState,
        front: QueuedOrder,
    ) -> Result<TransitionEvent, EngineError> {
        let pre_time = state.now;
        let book = state.side(front.side);
        let (rule, removed) = if !book.active_prices.contains(&front.price) {
            (Rule::CancelNotInListActive, None)
        } else {
            let level = book.level(front.price).ok_or(EngineError::MissingLevel {
                side: front.side,
                price: front.price,
            })?;
            let head = level.head().ok_or(EngineError::EmptyLevel {
                side: front.side,
                price: front.price,
            })?;
            let qty_ok = !self.opts.cancel_match_qty || head.qty == front.qty;
            if level.len() == 1 && head.id == front.id && qty_ok {
                (Rule::CancelInListNil, Some(head.qty))
            } else if level.len() >= 2 && level.contains(front.id) {
                let removed = level.fifo.iter().find(|e| e.id == front.id).map(|e| e.qty);
                (Rule::CancelInListCons, removed)
            } else {
                (Rule::CancelNotInListQueue, None)
            }
        };

        let flag = (removed.is_none()
            && (state.buy.resident_qty(front.id) + state.sell.resident_qty(front.id)) > 0)
            .then_some(EventFlag::CancelTargetElsewhere);

        let book = state.side_mut(front.side);
        match rule {
            Rule::CancelInListNil => {
                book.levels.remove(&front.price);
                book.active_prices.remove(&front.price);
            }
            Rule::CancelInListCons => {
                let level = book
                    .levels
                    .get_mut(&front.price)
                    .expect("level checked above");
                *level = guards::fifo_remove(level, front.id).expect("id checked above");
            }
            _ => {}
        }
        state.order_queue.pop_front();
        state.now = pre_time.succ();
        let mut ev = event(rule, front, pre_time, state.now);
        ev.discarded = removed;
        ev.flag = flag;
        Ok(ev)
    }
}

/// limit/empty or limit/queue.
fn rest(state: &mut MarketState, front: QueuedOrder) -> TransitionEvent {
    let pre_time = state.now;
    let book = state.side_mut(front.side);
    let rule = if book.active_prices.contains(&front.price) {
        Rule::LimitQueue
    } else {
        Rule::LimitEmpty
    };
    book.push_resident(
        front.price,
        ResidentEntry {
            id: front.id,
            qty: front.qty,
            arrival: front.arrival,
        },
    );
    state.order_queue.pop_front();
    state.now = pre_time.succ();
    event(rule, front, pre_time, state.now)
}

/// Opposite price furthest from the best that `limit` still accepts.
fn worst_acceptable(
    side: Side,
    opposite: &std::collections::BTreeSet<Price>,
    limit: Option<Price>,
) -> Option<Price> {
    let mut acceptable = opposite.iter().copied().filter(|p| match (side, limit) {
        (_, None) => true,
        (Side::Buy, Some(l)) => *p <= l,
        (Side::Sell, Some(l)) => *p >= l,
    });
    match side {
        Side::Buy => acceptable.next_back(),
        Side::Sell => acceptable.next(),
    }
}

fn event(
    rule: Rule,
    front: QueuedOrder,
    pre_time: LogicalTime,
    post_time: LogicalTime,
) -> TransitionEvent {
    TransitionEvent {
        rule,
        order_id: front.id,
        kind: front.kind,
        side: front.side,
        fill: None,
        discarded: None,
        time_advanced: post_time != pre_time,
        pre_time,
        post_time,
        flag: None,
    }
}

impl TransitionEvent {
    fn discarded(mut self, qty: Qty) -> Self {
        self.discarded = Some(qty);
        self
    }
}
