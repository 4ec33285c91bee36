//! Plain-text scenario files.
//!
//! One order per line:
//!
//! ```text
//! limit  <buy|sell> <price> <qty> <id>
//! market <buy|sell> <qty> <id>
//! cancel <buy|sell> <price> <id> [qty]
//! ```
//!
//! `#` starts a comment; blank lines are ignored. The optional cancel
//! quantity only matters when the engine matches cancels on quantity.

use std::fmt;

use thiserror::Error;

use crate::market::{IncomingOrder, OrderKind, Side, MAX_PRICE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", .errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
pub struct ParseError {
    pub errors: Vec<LineError>,
}

pub fn parse_scenario(text: &str) -> Result<Vec<IncomingOrder>, ParseError> {
    let mut orders = Vec::new();
    let mut errors = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match parse_line(line) {
            Ok(o) => orders.push(o),
            Err(message) => errors.push(LineError {
                line: i + 1,
                message,
            }),
        }
    }
    if errors.is_empty() {
        Ok(orders)
    } else {
        Err(ParseError { errors })
    }
}

fn parse_line(line: &str) -> Result<IncomingOrder, String> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let kind = match tokens[0] {
        "limit" => OrderKind::Limit,
        "market" => OrderKind::Market,
        "cancel" => OrderKind::Cancel,
        other => return Err(format!("unknown order kind `{other}`")),
    };
    let arity: &[usize] = match kind {
        OrderKind::Limit => &[5],
        OrderKind::Market => &[4],
        OrderKind::Cancel => &[4, 5],
    };
    if !arity.contains(&tokens.len()) {
        return Err(format!(
            "{kind} takes {} fields, found {}",
            usage(kind),
            tokens.len() - 1
        ));
    }
    let side = match tokens[1] {
        "buy" => Side::Buy,
        "sell" => Side::Sell,
        other => return Err(format!("expected `buy` or `sell`, found `{other}`")),
    };
    let num = |idx: usize, what: &str| -> Result<u64, String> {
        tokens[idx]
            .parse::<u64>()
            .map_err(|_| format!("{what} `{}` is not a nonnegative integer", tokens[idx]))
    };
    let price = |idx: usize| -> Result<u64, String> {
        let p = num(idx, "price")?;
        if p > MAX_PRICE {
            return Err(format!("price {p} exceeds the maximum {MAX_PRICE}"));
        }
        Ok(p)
    };
    let qty = |idx: usize| -> Result<u64, String> {
        let q = num(idx, "qty")?;
        if q == 0 {
            return Err("qty must be positive".into());
        }
        Ok(q)
    };
    Ok(match kind {
        OrderKind::Limit => IncomingOrder::limit(side, price(2)?, qty(3)?, num(4, "id")?),
        OrderKind::Market => IncomingOrder::market(side, qty(2)?, num(3, "id")?),
        OrderKind::Cancel => {
            let mut o = IncomingOrder::cancel(side, price(2)?, num(3, "id")?);
            if tokens.len() == 5 {
                o.qty = qty(4)?.into();
            }
            o
        }
    })
}

fn usage(kind: OrderKind) -> &'static str {
    match kind {
        OrderKind::Limit => "<buy|sell> <price> <qty> <id>",
        OrderKind::Market => "<buy|sell> <qty> <id>",
        OrderKind::Cancel => "<buy|sell> <price> <id> [qty]",
    }
}

/// Renders one order in scenario-file syntax.
pub fn format_order(o: &IncomingOrder) -> String {
    match o.kind {
        OrderKind::Limit => format!("limit {} {} {} {}", o.side, o.price, o.qty, o.id),
        OrderKind::Market => format!("market {} {} {}", o.side, o.qty, o.id),
        OrderKind::Cancel if o.qty.0 > 0 => {
            format!("cancel {} {} {} {}", o.side, o.price, o.id, o.qty)
        }
        OrderKind::Cancel => format!("cancel {} {} {}", o.side, o.price, o.id),
    }
}

pub fn format_scenario(orders: &[IncomingOrder]) -> String {
    orders.iter().map(|o| format_order(o) + "\n").collect()
}
