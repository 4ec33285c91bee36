//! Guard predicates consulted by the transition rules.
//!
//! All functions are pure. Set operations on active prices and integer
//! comparisons are ordinary `BTreeSet` and `u64` operations and do not get
//! wrappers here.

use std::collections::BTreeSet;

use crate::market::{OrderId, Price, PriceLevel, Side};

pub fn dual(side: Side) -> Side {
    side.dual()
}

/// True iff an incoming limit order on `side` has no acceptable counterpart
/// among `opposite` prices and must rest in the book.
///
/// A buy at `limit` accepts any sell at `limit` or lower; a sell accepts any
/// buy at `limit` or higher.
pub fn storable(side: Side, opposite: &BTreeSet<Price>, limit: Price) -> bool {
    exchange_price(side, opposite, limit).is_none()
}

/// The best opposite price if it is acceptable to a limit order at `limit`.
pub fn exchange_price(side: Side, opposite: &BTreeSet<Price>, limit: Price) -> Option<Price> {
    let best = market_exchange_price(side, opposite)?;
    let acceptable = match side {
        Side::Buy => best <= limit,
        Side::Sell => best >= limit,
    };
    acceptable.then_some(best)
}

/// The best opposite price, whatever it is. `None` iff `opposite` is empty.
pub fn market_exchange_price(side: Side, opposite: &BTreeSet<Price>) -> Option<Price> {
    match side {
        Side::Buy => opposite.first().copied(),
        Side::Sell => opposite.last().copied(),
    }
}

/// Removes the entry for `id`, keeping the relative order of the rest.
///
/// Returns `None` if `id` is not in the level. The result may have an empty
/// fifo; callers decide what that means.
pub fn fifo_remove(level: &PriceLevel, id: OrderId) -> Option<PriceLevel> {
    let pos = level.fifo.iter().position(|e| e.id == id)?;
    let mut out = level.clone();
    out.fifo.remove(pos);
    Some(out)
}
