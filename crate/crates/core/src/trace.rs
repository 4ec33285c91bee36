//! Line-delimited JSON trace records.
//!
//! One record per transition, fields always present and always in the same
//! order, so two runs of the same scenario produce byte-identical output.

use serde::{Deserialize, Serialize};

use crate::engine::{EventFlag, Rule, TraceStep, TransitionEvent};
use crate::market::{LogicalTime, MarketState, OrderId, Price, Qty};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillRecord {
    pub resting_id: OrderId,
    pub price: Price,
    pub qty: Qty,
    pub resting_remainder: Qty,
    pub incoming_remainder: Qty,
}

/// Summary of the book after a transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Digest {
    pub bid: Option<Price>,
    pub ask: Option<Price>,
    pub buy_levels: usize,
    pub sell_levels: usize,
}

impl Digest {
    pub fn of(state: &MarketState) -> Self {
        Digest {
            bid: state.best_bid(),
            ask: state.best_ask(),
            buy_levels: state.buy.levels.len(),
            sell_levels: state.sell.levels.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub rule: Rule,
    pub pre_time: LogicalTime,
    pub post_time: LogicalTime,
    pub order_id: OrderId,
    pub fill: Option<FillRecord>,
    pub flag: Option<EventFlag>,
    pub digest: Digest,
}

impl TraceRecord {
    pub fn new(seq: u64, event: &TransitionEvent, post: &MarketState) -> Self {
        TraceRecord {
            seq,
            rule: event.rule,
            pre_time: event.pre_time,
            post_time: event.post_time,
            order_id: event.order_id,
            fill: event.fill.map(|f| FillRecord {
                resting_id: f.resting_id,
                price: f.price,
                qty: f.qty,
                resting_remainder: f.resting_remainder,
                incoming_remainder: f.incoming_remainder,
            }),
            flag: event.flag,
            digest: Digest::of(post),
        }
    }
}

pub fn records(steps: &[TraceStep]) -> Vec<TraceRecord> {
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| TraceRecord::new(i as u64, &s.event, &s.post))
        .collect()
}

pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trace records always serialize"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Index of the first record whose digest disagrees with a replayed step.
pub fn first_digest_mismatch(records: &[TraceRecord], replay: &[TraceStep]) -> Option<usize> {
    if records.len() != replay.len() {
        return Some(records.len().min(replay.len()));
    }
    records
        .iter()
        .zip(replay)
        .position(|(r, s)| r.digest != Digest::of(&s.post) || r.rule != s.event.rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_orders, Drain};
    use crate::market::{IncomingOrder, Side};
    use crate::Engine;

    fn pair_steps() -> Vec<TraceStep> {
        let orders = [
            IncomingOrder::limit(Side::Buy, 5, 2, 1),
            IncomingOrder::limit(Side::Sell, 5, 2, 2),
        ];
        run_orders(&Engine::default(), &orders, Drain::Interleaved).1
    }

    #[test]
    fn record_layout_is_stable() {
        let recs = records(&pair_steps());
        let text = to_jsonl(&recs);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(
            lines[0],
            r#"{"seq":0,"rule":"enqueue","pre_time":0,"post_time":1,"order_id":1,"fill":null,"flag":null,"digest":{"bid":null,"ask":null,"buy_levels":0,"sell_levels":0}}"#
        );
        assert_eq!(
            lines[3],
            r#"{"seq":3,"rule":"limit/1","pre_time":3,"post_time":4,"order_id":2,"fill":{"resting_id":1,"price":5,"qty":2,"resting_remainder":0,"incoming_remainder":0},"flag":null,"digest":{"bid":null,"ask":null,"buy_levels":0,"sell_levels":0}}"#
        );
    }

    #[test]
    fn jsonl_round_trips_and_digests_replay() {
        let steps = pair_steps();
        let recs = records(&steps);
        let parsed = from_jsonl(&to_jsonl(&recs)).unwrap();
        assert_eq!(parsed, recs);
        assert_eq!(first_digest_mismatch(&parsed, &steps), None);
        let mut tampered = parsed.clone();
        tampered[2].digest.bid = None;
        assert_eq!(first_digest_mismatch(&tampered, &steps), Some(2));
    }
}
