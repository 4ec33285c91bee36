//! Market state: the order queue, both sides of the book and the logical clock.
//!
//! A [`MarketState`] is the whole linear context of the trading system. The
//! engine never mutates a state it has been handed by reference; transitions
//! produce a new value.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Largest price the engine accepts. Keeps `limit + 1` style arithmetic in
/// callers comfortably away from overflow.
pub const MAX_PRICE: u64 = u32::MAX as u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub const ALL: [Side; 2] = [Side::Buy, Side::Sell];

    pub fn dual(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Buy => "buy",
            Side::Sell => "sell",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderKind {
    Limit,
    Market,
    Cancel,
}

impl OrderKind {
    pub const ALL: [OrderKind; 3] = [OrderKind::Limit, OrderKind::Market, OrderKind::Cancel];

    pub fn as_str(self) -> &'static str {
        match self {
            OrderKind::Limit => "limit",
            OrderKind::Market => "market",
            OrderKind::Cancel => "cancel",
        }
    }
}

impl fmt::Display for OrderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

macro_rules! newtype_u64 {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl $name {
            pub fn get(self) -> u64 {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl From<u64> for $name {
            fn from(v: u64) -> Self {
                $name(v)
            }
        }
    };
}

newtype_u64!(
    /// Price in integer ticks.
    Price
);
newtype_u64!(
    /// Quantity of the traded asset. Positive on every live order.
    Qty
);
newtype_u64!(OrderId);
newtype_u64!(
    /// Logical clock value. Advances by one per completed order.
    LogicalTime
);

impl LogicalTime {
    pub fn succ(self) -> LogicalTime {
        LogicalTime(self.0 + 1)
    }
}

/// An instruction as it arrives, before it is timestamped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IncomingOrder {
    pub kind: OrderKind,
    pub side: Side,
    /// Nominal for market orders, which never read it.
    pub price: Price,
    pub id: OrderId,
    /// Zero for cancels that do not name a quantity.
    pub qty: Qty,
}

impl IncomingOrder {
    pub fn limit(side: Side, price: u64, qty: u64, id: u64) -> Self {
        IncomingOrder {
            kind: OrderKind::Limit,
            side,
            price: Price(price),
            id: OrderId(id),
            qty: Qty(qty),
        }
    }

    pub fn market(side: Side, qty: u64, id: u64) -> Self {
        IncomingOrder {
            kind: OrderKind::Market,
            side,
            price: Price(0),
            id: OrderId(id),
            qty: Qty(qty),
        }
    }

    pub fn cancel(side: Side, price: u64, id: u64) -> Self {
        IncomingOrder {
            kind: OrderKind::Cancel,
            side,
            price: Price(price),
            id: OrderId(id),
            qty: Qty(0),
        }
    }

    pub fn stamped(self, arrival: LogicalTime) -> QueuedOrder {
        QueuedOrder {
            kind: self.kind,
            side: self.side,
            price: self.price,
            id: self.id,
            qty: self.qty,
            arrival,
        }
    }
}

/// An order sitting in the processing queue with its arrival time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueuedOrder {
    pub kind: OrderKind,
    pub side: Side,
    pub price: Price,
    pub id: OrderId,
    pub qty: Qty,
    pub arrival: LogicalTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResidentEntry {
    pub id: OrderId,
    pub qty: Qty,
    pub arrival: LogicalTime,
}

/// FIFO of resident orders sharing a side and a price.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PriceLevel {
    pub price: Price,
    pub fifo: VecDeque<ResidentEntry>,
}

impl PriceLevel {
    pub fn singleton(price: Price, entry: ResidentEntry) -> Self {
        PriceLevel {
            price,
            fifo: VecDeque::from([entry]),
        }
    }

    pub fn head(&self) -> Option<&ResidentEntry> {
        self.fifo.front()
    }

    pub fn total_qty(&self) -> u64 {
        self.fifo.iter().map(|e| e.qty.0).sum()
    }

    pub fn contains(&self, id: OrderId) -> bool {
        self.fifo.iter().any(|e| e.id == id)
    }

    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }
}

/// One side of the book: the active price set plus a level per active price.
///
/// The two collections are kept separately so that a state where they
/// disagree can be represented (and reported by [`MarketState::well_formed`]).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BookSide {
    pub side: Side,
    pub active_prices: BTreeSet<Price>,
    pub levels: BTreeMap<Price, PriceLevel>,
}

impl BookSide {
    pub fn new(side: Side) -> Self {
        BookSide {
            side,
            active_prices: BTreeSet::new(),
            levels: BTreeMap::new(),
        }
    }

    /// Best price for this side: highest for buys, lowest for sells.
    pub fn best(&self) -> Option<Price> {
        match self.side {
            Side::Buy => self.active_prices.last().copied(),
            Side::Sell => self.active_prices.first().copied(),
        }
    }

    pub fn level(&self, price: Price) -> Option<&PriceLevel> {
        self.levels.get(&price)
    }

    pub fn is_empty(&self) -> bool {
        self.active_prices.is_empty()
    }

    pub fn resident_qty(&self, id: OrderId) -> u64 {
        self.levels
            .values()
            .flat_map(|l| l.fifo.iter())
            .filter(|e| e.id == id)
            .map(|e| e.qty.0)
            .sum()
    }

    /// Appends a resident at `price`, creating the level if needed.
    pub(crate) fn push_resident(&mut self, price: Price, entry: ResidentEntry) {
        self.active_prices.insert(price);
        self.levels
            .entry(price)
            .and_modify(|l| l.fifo.push_back(entry))
            .or_insert_with(|| PriceLevel::singleton(price, entry));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarketState {
    pub order_queue: VecDeque<QueuedOrder>,
    pub buy: BookSide,
    pub sell: BookSide,
    pub now: LogicalTime,
}

impl Default for MarketState {
    fn default() -> Self {
        Self::init()
    }
}

/// A broken state invariant, with enough location detail to find it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub invariant: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.invariant, self.detail)
    }
}

pub const INV_SIDE_TAG: &str = "book side tags";
pub const INV_NONEMPTY: &str = "price queues never empty";
pub const INV_ACTIVE_LEVELS: &str = "activePrices/levels mismatch";
pub const INV_LEVEL_KEY: &str = "level price matches key";
pub const INV_FIFO_ORDER: &str = "fifo arrivals strictly ascending";
pub const INV_POSITIVE_QTY: &str = "resident qty positive";
pub const INV_CLOCK: &str = "arrivals precede clock";
pub const INV_QUEUED_QTY: &str = "queued qty positive";
pub const INV_PRICE_BOUND: &str = "price within bound";

impl MarketState {
    /// Empty queue, empty books, time zero.
    pub fn init() -> Self {
        MarketState {
            order_queue: VecDeque::new(),
            buy: BookSide::new(Side::Buy),
            sell: BookSide::new(Side::Sell),
            now: LogicalTime(0),
        }
    }

    pub fn side(&self, side: Side) -> &BookSide {
        match side {
            Side::Buy => &self.buy,
            Side::Sell => &self.sell,
        }
    }

    pub fn side_mut(&mut self, side: Side) -> &mut BookSide {
        match side {
            Side::Buy => &mut self.buy,
            Side::Sell => &mut self.sell,
        }
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.buy.active_prices.last().copied()
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.sell.active_prices.first().copied()
    }

    pub fn is_quiescent(&self) -> bool {
        self.order_queue.is_empty()
    }

    /// Quantity still attributed to `id`, resting on either side or waiting in
    /// the queue.
    pub fn open_qty(&self, id: OrderId) -> u64 {
        let queued: u64 = self
            .order_queue
            .iter()
            .filter(|o| o.id == id && o.kind != OrderKind::Cancel)
            .map(|o| o.qty.0)
            .sum();
        self.buy.resident_qty(id) + self.sell.resident_qty(id) + queued
    }

    /// Every broken invariant, in a stable order. Empty means well formed.
    pub fn well_formed(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (expected, book) in [(Side::Buy, &self.buy), (Side::Sell, &self.sell)] {
            if book.side != expected {
                out.push(Violation {
                    invariant: INV_SIDE_TAG,
                    detail: format!("{expected} book tagged {}", book.side),
                });
            }
            for p in &book.active_prices {
                if !book.levels.contains_key(p) {
                    out.push(Violation {
                        invariant: INV_ACTIVE_LEVELS,
                        detail: format!("{expected} price {p} active without a level"),
                    });
                }
            }
            for (key, level) in &book.levels {
                if !book.active_prices.contains(key) {
                    out.push(Violation {
                        invariant: INV_ACTIVE_LEVELS,
                        detail: format!("{expected} level {key} present but price inactive"),
                    });
                }
                if level.price != *key {
                    out.push(Violation {
                        invariant: INV_LEVEL_KEY,
                        detail: format!(
                            "{expected} level keyed {key} carries price {}",
                            level.price
                        ),
                    });
                }
                if key.0 > MAX_PRICE {
                    out.push(Violation {
                        invariant: INV_PRICE_BOUND,
                        detail: format!("{expected} level {key} exceeds {MAX_PRICE}"),
                    });
                }
                if level.fifo.is_empty() {
                    out.push(Violation {
                        invariant: INV_NONEMPTY,
                        detail: format!("{expected} level {key} is empty"),
                    });
                }
                for pair in level.fifo.iter().collect::<Vec<_>>().windows(2) {
                    if pair[0].arrival >= pair[1].arrival {
                        out.push(Violation {
                            invariant: INV_FIFO_ORDER,
                            detail: format!(
                                "{expected} level {key}: id {} (t={}) before id {} (t={})",
                                pair[0].id, pair[0].arrival, pair[1].id, pair[1].arrival
                            ),
                        });
                    }
                }
                for e in &level.fifo {
                    if e.qty.0 == 0 {
                        out.push(Violation {
                            invariant: INV_POSITIVE_QTY,
                            detail: format!("{expected} level {key}: id {} has zero qty", e.id),
                        });
                    }
                    if e.arrival >= self.now {
                        out.push(Violation {
                            invariant: INV_CLOCK,
                            detail: format!(
                                "{expected} level {key}: id {} arrived at {} but now is {}",
                                e.id, e.arrival, self.now
                            ),
                        });
                    }
                }
            }
        }
        for (pos, q) in self.order_queue.iter().enumerate() {
            if q.arrival >= self.now {
                out.push(Violation {
                    invariant: INV_CLOCK,
                    detail: format!(
                        "queue[{pos}] id {} arrived at {} but now is {}",
                        q.id, q.arrival, self.now
                    ),
                });
            }
            if q.kind != OrderKind::Cancel && q.qty.0 == 0 {
                out.push(Violation {
                    invariant: INV_QUEUED_QTY,
                    detail: format!("queue[{pos}] id {} has zero qty", q.id),
                });
            }
        }
        out
    }
}

/// Builds book states directly. Used by tests and by checkers' fixtures.
#[derive(Debug, Clone)]
pub struct StateBuilder {
    state: MarketState,
}

impl StateBuilder {
    pub fn new() -> Self {
        StateBuilder {
            state: MarketState::init(),
        }
    }

    /// Adds a resident with the next arrival time.
    pub fn resident(mut self, side: Side, price: u64, qty: u64, id: u64) -> Self {
        let arrival = self.state.now;
        self.state.now = arrival.succ();
        self.state.side_mut(side).push_resident(
            Price(price),
            ResidentEntry {
                id: OrderId(id),
                qty: Qty(qty),
                arrival,
            },
        );
        self
    }

    /// Queues an order with the next arrival time.
    pub fn queued(mut self, order: IncomingOrder) -> Self {
        let arrival = self.state.now;
        self.state.now = arrival.succ();
        self.state.order_queue.push_back(order.stamped(arrival));
        self
    }

    pub fn build(self) -> MarketState {
        self.state
    }
}

impl Default for StateBuilder {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_prices(side: Side, prices: &[u64]) -> MarketState {
        prices
            .iter()
            .enumerate()
            .fold(StateBuilder::new(), |b, (i, p)| {
                b.resident(side, *p, 1, i as u64)
            })
            .build()
    }

    #[test]
    fn init_is_empty() {
        let s = MarketState::init();
        assert!(s.order_queue.is_empty());
        assert!(s.buy.active_prices.is_empty() && s.buy.levels.is_empty());
        assert!(s.sell.active_prices.is_empty() && s.sell.levels.is_empty());
        assert_eq!(s.now, LogicalTime(0));
        assert_eq!(s.best_bid(), None);
        assert_eq!(s.best_ask(), None);
        assert!(s.well_formed().is_empty());
    }

    #[test]
    fn best_bid_is_max() {
        assert_eq!(with_prices(Side::Buy, &[3, 5]).best_bid(), Some(Price(5)));
        assert_eq!(with_prices(Side::Buy, &[7]).best_bid(), Some(Price(7)));
        assert_eq!(with_prices(Side::Sell, &[7]).best_bid(), None);
    }

    #[test]
    fn best_ask_is_min() {
        assert_eq!(with_prices(Side::Sell, &[5, 3]).best_ask(), Some(Price(3)));
        assert_eq!(
            with_prices(Side::Sell, &[2468]).best_ask(),
            Some(Price(2468))
        );
        assert_eq!(with_prices(Side::Buy, &[3]).best_ask(), None);
    }

    #[test]
    fn dual_is_an_involution() {
        assert_eq!(Side::Buy.dual(), Side::Sell);
        assert_eq!(Side::Sell.dual(), Side::Buy);
        for s in Side::ALL {
            assert_eq!(s.dual().dual(), s);
        }
    }

    #[test]
    fn empty_level_is_reported() {
        let mut s = with_prices(Side::Buy, &[4]);
        s.buy.levels.get_mut(&Price(4)).unwrap().fifo.clear();
        let v = s.well_formed();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].invariant, INV_NONEMPTY);
    }

    #[test]
    fn active_price_without_level_is_reported() {
        let mut s = MarketState::init();
        s.sell.active_prices.insert(Price(5));
        let v = s.well_formed();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].invariant, INV_ACTIVE_LEVELS);
        assert!(v[0].detail.contains("price 5"));
    }

    #[test]
    fn fifo_out_of_order_is_reported() {
        let mut s = StateBuilder::new()
            .resident(Side::Sell, 9, 1, 1)
            .resident(Side::Sell, 9, 1, 2)
            .build();
        s.sell.levels.get_mut(&Price(9)).unwrap().fifo.swap(0, 1);
        assert!(s
            .well_formed()
            .iter()
            .any(|v| v.invariant == INV_FIFO_ORDER));
    }

    #[test]
    fn stale_clock_is_reported() {
        let mut s = with_prices(Side::Buy, &[1]);
        s.now = LogicalTime(0);
        assert!(s.well_formed().iter().any(|v| v.invariant == INV_CLOCK));
    }

    #[test]
    fn open_qty_counts_queue_and_book() {
        let s = StateBuilder::new()
            .resident(Side::Buy, 2, 3, 7)
            .queued(IncomingOrder::limit(Side::Sell, 5, 4, 8))
            .queued(IncomingOrder::cancel(Side::Buy, 2, 7))
            .build();
        assert_eq!(s.open_qty(OrderId(7)), 3);
        assert_eq!(s.open_qty(OrderId(8)), 4);
        assert_eq!(s.open_qty(OrderId(9)), 0);
    }
}
