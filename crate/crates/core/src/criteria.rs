//! Ranking criteria: a scalar score per instrument over a lookback window.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::{DayIdx, Frequency, MarketDataError, NetFlows, PriceStore, Window};
use crate::universe::{MembershipCalendar, UniverseExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowGroup {
    Individual,
    Institutional,
    Foreign,
}

impl FlowGroup {
    pub const ALL: [FlowGroup; 3] = [FlowGroup::Individual, FlowGroup::Institutional, FlowGroup::Foreign];

    fn pick(self, f: &NetFlows) -> i64 {
        match self {
            FlowGroup::Individual => f.individual,
            FlowGroup::Institutional => f.institutional,
            FlowGroup::Foreign => f.foreign,
        }
    }

    fn name(self) -> &'static str {
        match self {
            FlowGroup::Individual => "individual",
            FlowGroup::Institutional => "institutional",
            FlowGroup::Foreign => "foreign",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    /// Compounded return over the lookback window (`momentum`).
    CumulativeReturn,
    /// Market capitalisation at formation (`size`).
    MarketCap,
    /// Mean daily turnover over the window (`liquidity`).
    FractionalVolume,
    /// Net shares bought by one investor group over the window, per share outstanding.
    NetFlow(FlowGroup),
}

impl Criterion {
    pub const ALL: [Criterion; 6] = [
        Criterion::CumulativeReturn,
        Criterion::MarketCap,
        Criterion::FractionalVolume,
        Criterion::NetFlow(FlowGroup::Individual),
        Criterion::NetFlow(FlowGroup::Institutional),
        Criterion::NetFlow(FlowGroup::Foreign),
    ];

    /// Score of one instrument for the window ending at formation.
    pub fn score(&self, store: &PriceStore, inst: usize, window: Window) -> Result<f64, MarketDataError> {
        match *self {
            Criterion::CumulativeReturn => score_cumulative_return(store, inst, window),
            Criterion::MarketCap => score_market_cap(store, inst, window.end),
            Criterion::FractionalVolume => score_fractional_volume(store, inst, window),
            Criterion::NetFlow(g) => score_net_flow(store, g, inst, window),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::CumulativeReturn => f.write_str("momentum"),
            Criterion::MarketCap => f.write_str("size"),
            Criterion::FractionalVolume => f.write_str("liquidity"),
            Criterion::NetFlow(g) => write!(f, "flow:{}", g.name()),
        }
    }
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::ALL.into_iter().find(|c| c.to_string() == s).ok_or_else(|| {
            format!(
                "unknown criterion `{s}` (expected one of momentum, size, liquidity, \
                     flow:individual, flow:institutional, flow:foreign)"
            )
        })
    }
}

/// Scores of the eligible members of a universe at one formation date.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub date: NaiveDate,
    pub formation: DayIdx,
    /// `(instrument index, score)`, in instrument order.
    pub entries: Vec<(usize, f64)>,
    /// Universe members left out for insufficient data.
    pub ineligible: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriteriaError {
    #[error("no eligible members in universe {universe} on {date}")]
    EmptyUniverse { universe: String, date: NaiveDate },
    #[error("formation period {period} with lookback {lookback} is outside the calendar")]
    WindowOutOfRange { period: usize, lookback: usize },
    #[error(transparent)]
    Data(#[from] MarketDataError),
}

pub fn score_cumulative_return(store: &PriceStore, inst: usize, window: Window) -> Result<f64, MarketDataError> {
    store.period_return(inst, window.anchor, window.end)
}

pub fn score_market_cap(store: &PriceStore, inst: usize, formation: DayIdx) -> Result<f64, MarketDataError> {
    Ok(store.price_at(inst, formation)?.market_cap)
}

pub fn score_fractional_volume(store: &PriceStore, inst: usize, window: Window) -> Result<f64, MarketDataError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for day in window.days() {
        if let Some(bar) = store.bar(inst, day) {
            sum += bar.turnover();
            n += 1;
        }
    }
    if n == 0 {
        return Err(MarketDataError::NoPriceAvailable {
            instrument: store.instruments()[inst].to_string(),
            date: store.calendar().date(window.end),
        });
    }
    Ok(sum / n as f64)
}

pub fn score_net_flow(
    store: &PriceStore,
    group: FlowGroup,
    inst: usize,
    window: Window,
) -> Result<f64, MarketDataError> {
    let mut net: i64 = 0;
    for day in window.days() {
        if let Some(f) = store.flows(inst, day)? {
            net += group.pick(&f);
        }
    }
    let shares = store.price_at(inst, window.end)?.shares_outstanding;
    Ok(net as f64 / shares as f64)
}

/// Scores every eligible member of `expr` at formation mark `period`.
///
/// Members failing the coverage rule, or whose score cannot be computed (no anchor price,
/// stale data), are omitted and counted in [`ScoreVector::ineligible`].
pub fn build_scores(
    store: &PriceStore,
    membership: &MembershipCalendar,
    expr: &UniverseExpr,
    criterion: Criterion,
    frequency: Frequency,
    period: usize,
    lookback: usize,
) -> Result<ScoreVector, CriteriaError> {
    if matches!(criterion, Criterion::NetFlow(_)) && !store.has_flows() {
        return Err(MarketDataError::NoFlowData.into());
    }
    let window = store
        .calendar()
        .lookback_window(frequency, period, lookback)
        .ok_or(CriteriaError::WindowOutOfRange { period, lookback })?;
    let date = store.calendar().date(window.end);
    let members = membership.members(expr, date);
    let mut entries = Vec::with_capacity(members.len());
    let mut ineligible = 0;
    for inst in members {
        if !store.eligible(inst, window) {
            ineligible += 1;
            continue;
        }
        match criterion.score(store, inst, window) {
            Ok(s) if s.is_finite() => entries.push((inst, s)),
            Ok(_) | Err(MarketDataError::NoPriceAvailable { .. }) | Err(MarketDataError::StaleData { .. }) => {
                ineligible += 1
            }
            Err(e) => return Err(e.into()),
        }
    }
    if entries.is_empty() {
        return Err(CriteriaError::EmptyUniverse {
            universe: expr.to_string(),
            date,
        });
    }
    Ok(ScoreVector {
        date,
        formation: window.end,
        entries,
        ineligible,
    })
}
