//! Trading score: hold `forecast − reference` units of the event contract
//! each day, mark to market at the next reference price, and settle at the
//! outcome.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::scoring::{BinaryForecastSeries, Realization};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TradingError {
    #[error("forecast and reference share no dates")]
    NoOverlap,
    #[error("reference price {0} outside [0, 1]")]
    Price(f64),
    #[error("reference times must be strictly increasing")]
    Unordered,
    #[error("reference has no price for day {0}")]
    MissingDate(i64),
    #[error("P&L series is already settled")]
    AlreadySettled,
    #[error("settlement needs a binary realization")]
    NotBinary,
    #[error("need at least one series to build a reference")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    BettingMarket,
    PairMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSeries {
    pub points: Vec<(i64, f64)>,
    pub kind: ReferenceKind,
}

impl ReferenceSeries {
    pub fn new(points: Vec<(i64, f64)>, kind: ReferenceKind) -> Result<Self, TradingError> {
        if let Some(&(_, p)) = points.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
            return Err(TradingError::Price(p));
        }
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(TradingError::Unordered);
        }
        Ok(ReferenceSeries { points, kind })
    }

    pub fn market(points: Vec<(i64, f64)>) -> Result<Self, TradingError> {
        ReferenceSeries::new(points, ReferenceKind::BettingMarket)
    }

    pub fn price_at(&self, t: i64) -> Option<f64> {
        self.points
            .binary_search_by_key(&t, |(d, _)| *d)
            .ok()
            .map(|i| self.points[i].1)
    }

    pub fn last(&self) -> Option<(i64, f64)> {
        self.points.last().copied()
    }
}

/// Reference at the average of several forecasters, on the dates they all
/// share. With two forecasters this is the pair mean.
pub fn mean_reference(series: &[&BinaryForecastSeries]) -> Result<ReferenceSeries, TradingError> {
    let first = series.first().ok_or(TradingError::Empty)?;
    let maps: Vec<BTreeMap<i64, f64>> = series.iter().map(|s| s.points.iter().copied().collect()).collect();
    let points: Vec<(i64, f64)> = first
        .points
        .iter()
        .filter_map(|(t, _)| {
            let vals: Option<Vec<f64>> = maps.iter().map(|m| m.get(t).copied()).collect();
            vals.map(|v| (*t, v.iter().sum::<f64>() / v.len() as f64))
        })
        .collect();
    if points.is_empty() {
        return Err(TradingError::NoOverlap);
    }
    ReferenceSeries::new(points, ReferenceKind::PairMean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub t: i64,
    /// Contracts held: forecast minus reference.
    pub size: f64,
    /// Reference price at which the position is struck.
    pub price: f64,
}

/// Positions on the dates where forecast and reference overlap.
pub fn positions(forecast: &BinaryForecastSeries, reference: &ReferenceSeries) -> Result<Vec<Position>, TradingError> {
    let out: Vec<Position> = forecast
        .points
        .iter()
        .filter_map(|&(t, a)| {
            reference.price_at(t).map(|s| Position {
                t,
                size: a - s,
                price: s,
            })
        })
        .collect();
    if out.is_empty() {
        return Err(TradingError::NoOverlap);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Settlement {
    /// Settle at the realized outcome (price 0 or 1).
    Outcome(bool),
    /// Settle at a final market price.
    Price(f64),
}

impl Settlement {
    pub fn from_realization(omega: Realization) -> Result<Self, TradingError> {
        match omega {
            Realization::Binary(w) => Ok(Settlement::Outcome(w)),
            Realization::Electoral(_) => Err(TradingError::NotBinary),
        }
    }

    fn price(self) -> f64 {
        match self {
            Settlement::Outcome(true) => 1.0,
            Settlement::Outcome(false) => 0.0,
            Settlement::Price(p) => p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PnLSeries {
    pub forecaster: String,
    /// `(day, increment)`; the first day always has a zero increment.
    pub daily: Vec<(i64, f64)>,
    pub cumulative: Vec<f64>,
    /// Final increment booked at settlement, if settled.
    pub settlement: Option<f64>,
    last: Position,
}

impl PnLSeries {
    pub fn is_settled(&self) -> bool {
        self.settlement.is_some()
    }

    /// Mark-to-market P&L before settlement; available at any date.
    pub fn unsettled_total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.unsettled_total() + self.settlement.unwrap_or(0.0)
    }

    pub fn last_position(&self) -> Position {
        self.last
    }

    /// Closes the last position at the settlement price.
    pub fn settle(mut self, settlement: Settlement) -> Result<PnLSeries, TradingError> {
        if self.is_settled() {
            return Err(TradingError::AlreadySettled);
        }
        self.settlement = Some(self.last.size * (settlement.price() - self.last.price));
        Ok(self)
    }
}

/// Each day's position is closed at the next position date's reference
/// price: increment at `t_{k+1}` is `size_k · (s_{k+1} − s_k)`.
pub fn mark_to_market(
    forecaster: impl Into<String>,
    positions: &[Position],
    reference: &ReferenceSeries,
) -> Result<PnLSeries, TradingError> {
    let first = positions.first().ok_or(TradingError::NoOverlap)?;
    let price = |t: i64| reference.price_at(t).ok_or(TradingError::MissingDate(t));
    let mut daily = vec![(first.t, 0.0)];
    let mut prev_price = price(first.t)?;
    for w in positions.windows(2) {
        let next_price = price(w[1].t)?;
        daily.push((w[1].t, w[0].size * (next_price - prev_price)));
        prev_price = next_price;
    }
    let cumulative = daily
        .iter()
        .scan(0.0, |acc, (_, inc)| {
            *acc += inc;
            Some(*acc)
        })
        .collect();
    let last = *positions.last().expect("non-empty");
    Ok(PnLSeries {
        forecaster: forecaster.into(),
        daily,
        cumulative,
        settlement: None,
        last: Position {
            price: prev_price,
            ..last
        },
    })
}

/// Full trading-score P&L for one forecaster, settled at `omega` when given
/// and at the final reference price otherwise.
pub fn trading_pnl(
    forecast: &BinaryForecastSeries,
    reference: &ReferenceSeries,
    omega: Option<Realization>,
) -> Result<PnLSeries, TradingError> {
    let pos = positions(forecast, reference)?;
    let pnl = mark_to_market(forecast.forecaster.clone(), &pos, reference)?;
    let settlement = match omega {
        Some(o) => Settlement::from_realization(o)?,
        None => Settlement::Price(pnl.last.price),
    };
    pnl.settle(settlement)
}

/// The settled trading score. Higher is better.
pub fn trading_score(
    forecast: &BinaryForecastSeries,
    reference: &ReferenceSeries,
    omega: Option<Realization>,
) -> Result<f64, TradingError> {
    trading_pnl(forecast, reference, omega).map(|p| p.total())
}
