//! Price/time priority matching engine written as a deterministic
//! state-transition system, with executable checkers for its market
//! invariants and a small-scope exhaustive harness.
//!
//! The pieces, bottom up:
//!
//! - [`market`]: the state (order queue, two book sides, logical clock).
//! - [`guards`]: pure predicates the rules consult.
//! - [`engine`]: the rules themselves, one per step.
//! - [`checks`]: state, transition and trace invariants.
//! - [`harness`]: scenario runs and exhaustive enumeration.
//! - [`scenario`] and [`trace`]: file formats.
//! - [`cli`]: the `ats` command line.

pub mod checks;
pub mod cli;
pub mod engine;
pub mod guards;
pub mod harness;
pub mod market;
pub mod scenario;
pub mod trace;

pub use engine::{
    Engine, EngineError, EngineOptions, Fault, Fill, MarketRemainder, Rule, TraceStep,
    TransitionEvent,
};
pub use market::{
    BookSide, IncomingOrder, LogicalTime, MarketState, OrderId, OrderKind, Price, PriceLevel, Qty,
    QueuedOrder, ResidentEntry, Side,
};
