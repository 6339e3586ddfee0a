//! Daily price/volume/size/flow panel.
//!
//! A [`PriceStore`] is built once (from CSV via [`load_prices`] or in memory via
//! [`PriceStore::from_bars`]) and is immutable afterwards. Bars are held densely per instrument,
//! indexed by calendar ordinal, so that forward-fill and coverage queries are O(1).

mod calendar;
mod load;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use chrono::NaiveDate;
use thiserror::Error;

pub use calendar::{DayIdx, Frequency, TradingCalendar, Window};
pub use load::{load_flows, load_prices, FLOWS_HEADER, PRICES_HEADER};

/// Exchange ticker. Ordering is lexicographic and is used for deterministic tie-breaking.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstrumentId(String);

impl InstrumentId {
    pub fn new(code: impl Into<String>) -> Result<Self, MarketDataError> {
        let code = code.into();
        if code.trim().is_empty() {
            return Err(MarketDataError::EmptyInstrumentId);
        }
        Ok(Self(code))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for InstrumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailyBar {
    pub date: NaiveDate,
    /// Corporate-action adjusted close.
    pub adj_close: f64,
    pub volume: u64,
    pub shares_outstanding: u64,
    pub market_cap: f64,
}

impl DailyBar {
    pub fn turnover(&self) -> f64 {
        self.volume as f64 / self.shares_outstanding as f64
    }
}

/// Net traded volume (shares) of the three investor groups for one instrument-day.
///
/// Only the institutional and foreign legs are observed; the individual leg is always
/// derived from the zero-sum identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetFlows {
    pub institutional: i64,
    pub foreign: i64,
    pub individual: i64,
}

impl NetFlows {
    pub fn from_observed(institutional: i64, foreign: i64) -> Self {
        Self {
            institutional,
            foreign,
            individual: -(institutional + foreign),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRecord {
    pub date: NaiveDate,
    pub instrument: InstrumentId,
    pub institutional_net: i64,
    pub foreign_net: i64,
    pub individual_net: i64,
}

/// Eligibility and forward-fill settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketRules {
    /// Minimum fraction of window trading days that must carry a bar.
    pub min_coverage: f64,
    /// Maximum number of trading days a price may be carried forward.
    pub staleness_limit: usize,
}

impl Default for MarketRules {
    fn default() -> Self {
        Self {
            min_coverage: 0.9,
            staleness_limit: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketDataError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: header mismatch, expected `{expected}`, found `{found}`")]
    BadHeader {
        path: String,
        expected: String,
        found: String,
    },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("non-positive price for {instrument} on {date} (line {line})")]
    NonPositivePrice {
        line: u64,
        instrument: String,
        date: NaiveDate,
    },
    #[error("duplicate bar for {instrument} on {date} (line {line})")]
    DuplicateBar {
        line: u64,
        instrument: String,
        date: NaiveDate,
    },
    #[error("dataset contains no bars")]
    EmptyDataset,
    #[error("instrument id must be non-empty")]
    EmptyInstrumentId,
    #[error("unknown instrument `{instrument}`")]
    UnknownInstrument { instrument: String },
    #[error("date {date} is not a trading date of the price calendar")]
    DateOutsideCalendar { date: NaiveDate },
    #[error("no price for {instrument} at or before {date}")]
    NoPriceAvailable { instrument: String, date: NaiveDate },
    #[error("price for {instrument} at {date} is stale: last bar {last} is {gap} trading days earlier")]
    StaleData {
        instrument: String,
        date: NaiveDate,
        last: NaiveDate,
        gap: usize,
    },
    #[error("no investor flow data loaded")]
    NoFlowData,
    #[error("invalid date range: start {start} is after end {end}")]
    InvalidRange { start: NaiveDate, end: NaiveDate },
}

/// Per-instrument dense columns over the calendar.
#[derive(Debug, Clone)]
struct Series {
    bars: Vec<Option<DailyBar>>,
    /// `last[d]` = last day `<= d` carrying a bar.
    last: Vec<Option<u32>>,
    /// `covered[d]` = number of bars on days `< d`.
    covered: Vec<u32>,
}

impl Series {
    fn new(bars: Vec<Option<DailyBar>>) -> Self {
        let mut last = Vec::with_capacity(bars.len());
        let mut covered = Vec::with_capacity(bars.len() + 1);
        let mut prev = None;
        let mut count = 0u32;
        covered.push(0);
        for (i, b) in bars.iter().enumerate() {
            if b.is_some() {
                prev = Some(i as u32);
                count += 1;
            }
            last.push(prev);
            covered.push(count);
        }
        Self { bars, last, covered }
    }
}

#[derive(Debug, Clone)]
pub struct PriceStore {
    calendar: TradingCalendar,
    instruments: Vec<InstrumentId>,
    series: Vec<Series>,
    flows: Option<Arc<Vec<Vec<Option<NetFlows>>>>>,
    rules: MarketRules,
}

impl PriceStore {
    /// Builds a store from in-memory bars. Instruments are ordered lexicographically.
    pub fn from_bars(bars: impl IntoIterator<Item = (InstrumentId, DailyBar)>) -> Result<Self, MarketDataError> {
        let mut by_inst: BTreeMap<InstrumentId, Vec<DailyBar>> = BTreeMap::new();
        for (id, bar) in bars {
            if bar.adj_close <= 0.0 || !bar.adj_close.is_finite() {
                return Err(MarketDataError::NonPositivePrice {
                    line: 0,
                    instrument: id.to_string(),
                    date: bar.date,
                });
            }
            if bar.shares_outstanding == 0 || bar.market_cap <= 0.0 || !bar.market_cap.is_finite() {
                return Err(MarketDataError::MalformedRow {
                    line: 0,
                    reason: format!("{id} on {}: shares and market cap must be positive", bar.date),
                });
            }
            by_inst.entry(id).or_default().push(bar);
        }
        if by_inst.is_empty() {
            return Err(MarketDataError::EmptyDataset);
        }
        let calendar = TradingCalendar::new(by_inst.values().flat_map(|v| v.iter().map(|b| b.date)).collect());
        let mut instruments = Vec::with_capacity(by_inst.len());
        let mut series = Vec::with_capacity(by_inst.len());
        for (id, bars) in by_inst {
            let mut dense = vec![None; calendar.len()];
            for bar in bars {
                let day = calendar.index_of(bar.date).expect("calendar built from bar dates");
                if dense[day.0].is_some() {
                    return Err(MarketDataError::DuplicateBar {
                        line: 0,
                        instrument: id.to_string(),
                        date: bar.date,
                    });
                }
                dense[day.0] = Some(bar);
            }
            instruments.push(id);
            series.push(Series::new(dense));
        }
        Ok(Self {
            calendar,
            instruments,
            series,
            flows: None,
            rules: MarketRules::default(),
        })
    }

    /// Returns a copy with investor flows attached. Unknown instruments and dates outside the
    /// calendar are rejected.
    pub fn with_flows(
        &self,
        flows: impl IntoIterator<Item = (InstrumentId, NaiveDate, i64, i64)>,
    ) -> Result<Self, MarketDataError> {
        let mut dense = vec![vec![None; self.calendar.len()]; self.instruments.len()];
        for (id, date, institutional, foreign) in flows {
            let inst = self
                .instrument_index(&id)
                .ok_or_else(|| MarketDataError::UnknownInstrument {
                    instrument: id.to_string(),
                })?;
            let day = self
                .calendar
                .index_of(date)
                .ok_or(MarketDataError::DateOutsideCalendar { date })?;
            dense[inst][day.0] = Some(NetFlows::from_observed(institutional, foreign));
        }
        let mut out = self.clone();
        out.flows = Some(Arc::new(dense));
        Ok(out)
    }

    pub fn with_rules(mut self, rules: MarketRules) -> Self {
        self.rules = rules;
        self
    }

    pub fn rules(&self) -> MarketRules {
        self.rules
    }

    pub fn calendar(&self) -> &TradingCalendar {
        &self.calendar
    }

    /// Instruments in ascending id order; positions in this slice are the instrument indices
    /// used throughout the crate.
    pub fn instruments(&self) -> &[InstrumentId] {
        &self.instruments
    }

    pub fn instrument_index(&self, id: &InstrumentId) -> Option<usize> {
        self.instruments.binary_search(id).ok()
    }

    pub fn has_flows(&self) -> bool {
        self.flows.is_some()
    }

    pub fn bar(&self, inst: usize, day: DayIdx) -> Option<&DailyBar> {
        self.series[inst].bars[day.0].as_ref()
    }

    pub fn bar_count(&self, inst: usize) -> usize {
        *self.series[inst].covered.last().unwrap_or(&0) as usize
    }

    pub fn flows(&self, inst: usize, day: DayIdx) -> Result<Option<NetFlows>, MarketDataError> {
        let flows = self.flows.as_ref().ok_or(MarketDataError::NoFlowData)?;
        Ok(flows[inst][day.0])
    }

    /// All flow records of one instrument, in date order.
    pub fn flow_records(&self, inst: usize) -> Result<Vec<FlowRecord>, MarketDataError> {
        let flows = self.flows.as_ref().ok_or(MarketDataError::NoFlowData)?;
        Ok(flows[inst]
            .iter()
            .enumerate()
            .filter_map(|(d, f)| {
                f.map(|f| FlowRecord {
                    date: self.calendar.date(DayIdx(d)),
                    instrument: self.instruments[inst].clone(),
                    institutional_net: f.institutional,
                    foreign_net: f.foreign,
                    individual_net: f.individual,
                })
            })
            .collect())
    }

    /// Last bar on or before `day`, however old.
    pub fn last_print(&self, inst: usize, day: DayIdx) -> Option<(DayIdx, &DailyBar)> {
        let s = &self.series[inst];
        s.last[day.0].map(|i| {
            let i = i as usize;
            (DayIdx(i), s.bars[i].as_ref().expect("last index points at a bar"))
        })
    }

    /// Last bar on or before `day`, forward-filled at most `staleness_limit` trading days.
    pub fn price_at(&self, inst: usize, day: DayIdx) -> Result<&DailyBar, MarketDataError> {
        let (at, bar) = self
            .last_print(inst, day)
            .ok_or_else(|| MarketDataError::NoPriceAvailable {
                instrument: self.instruments[inst].to_string(),
                date: self.calendar.date(day),
            })?;
        let gap = day.0 - at.0;
        if gap > self.rules.staleness_limit {
            return Err(MarketDataError::StaleData {
                instrument: self.instruments[inst].to_string(),
                date: self.calendar.date(day),
                last: bar.date,
                gap,
            });
        }
        Ok(bar)
    }

    /// Simple return `close(t1) / close(t0) - 1` with forward-fill.
    pub fn period_return(&self, inst: usize, t0: DayIdx, t1: DayIdx) -> Result<f64, MarketDataError> {
        if t0 > t1 {
            return Err(MarketDataError::InvalidRange {
                start: self.calendar.date(t0),
                end: self.calendar.date(t1),
            });
        }
        let p0 = self.price_at(inst, t0)?.adj_close;
        let p1 = self.price_at(inst, t1)?.adj_close;
        Ok(p1 / p0 - 1.0)
    }

    /// Number of window days carrying a bar, and the window length.
    pub fn coverage(&self, inst: usize, window: Window) -> (usize, usize) {
        let c = &self.series[inst].covered;
        let have = c[window.end.0 + 1] - c[window.anchor.0 + 1];
        (have as usize, window.len())
    }

    /// True iff the instrument is priced on at least `min_coverage` of the window's trading
    /// days and has a bar on the formation (window end) date.
    pub fn eligible(&self, inst: usize, window: Window) -> bool {
        if inst >= self.series.len() || window.is_empty() {
            return false;
        }
        if self.bar(inst, window.end).is_none() {
            return false;
        }
        let (have, total) = self.coverage(inst, window);
        have as f64 >= self.rules.min_coverage * total as f64
    }
}
