//! Trading calendar and period marks.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

/// Ordinal position of a trading date inside a [`TradingCalendar`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DayIdx(pub usize);

/// Rebalancing frequency; selects which period-end marks the engine steps on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Monthly,
    Weekly,
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frequency::Monthly => "monthly",
            Frequency::Weekly => "weekly",
        })
    }
}

impl FromStr for Frequency {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "monthly" => Ok(Frequency::Monthly),
            "weekly" => Ok(Frequency::Weekly),
            other => Err(format!("unknown frequency `{other}` (expected monthly|weekly)")),
        }
    }
}

/// A lookback window of trading days `(anchor, end]`.
///
/// `anchor` is the period mark J periods before formation and supplies the starting price;
/// the days that count for coverage and averaging are strictly after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub anchor: DayIdx,
    pub end: DayIdx,
}

impl Window {
    pub fn days(&self) -> impl Iterator<Item = DayIdx> {
        (self.anchor.0 + 1..=self.end.0).map(DayIdx)
    }

    pub fn len(&self) -> usize {
        self.end.0 - self.anchor.0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradingCalendar {
    dates: Vec<NaiveDate>,
    monthly: Vec<DayIdx>,
    weekly: Vec<DayIdx>,
}

impl TradingCalendar {
    /// Builds a calendar from arbitrary dates; duplicates are collapsed.
    pub fn new(mut dates: Vec<NaiveDate>) -> Self {
        dates.sort_unstable();
        dates.dedup();
        let monthly = period_ends(&dates, |d| (d.year(), d.month()));
        let weekly = period_ends(&dates, |d| {
            let w = d.iso_week();
            (w.year(), w.week())
        });
        Self { dates, monthly, weekly }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn date(&self, day: DayIdx) -> NaiveDate {
        self.dates[day.0]
    }

    /// Exact lookup of a trading date.
    pub fn index_of(&self, date: NaiveDate) -> Option<DayIdx> {
        self.dates.binary_search(&date).ok().map(DayIdx)
    }

    /// Last trading day on or before `date`.
    pub fn index_at_or_before(&self, date: NaiveDate) -> Option<DayIdx> {
        match self.dates.binary_search(&date) {
            Ok(i) => Some(DayIdx(i)),
            Err(0) => None,
            Err(i) => Some(DayIdx(i - 1)),
        }
    }

    /// Period-end trading days, in order. Each mark is the last trading date of its
    /// calendar month (or ISO week).
    pub fn marks(&self, frequency: Frequency) -> &[DayIdx] {
        match frequency {
            Frequency::Monthly => &self.monthly,
            Frequency::Weekly => &self.weekly,
        }
    }

    /// Window covering the `lookback` periods that end at mark `formation`.
    pub fn lookback_window(&self, frequency: Frequency, formation: usize, lookback: usize) -> Option<Window> {
        let marks = self.marks(frequency);
        if lookback == 0 || formation < lookback || formation >= marks.len() {
            return None;
        }
        Some(Window {
            anchor: marks[formation - lookback],
            end: marks[formation],
        })
    }
}

fn period_ends<K: PartialEq>(dates: &[NaiveDate], key: impl Fn(&NaiveDate) -> K) -> Vec<DayIdx> {
    let mut out = Vec::new();
    for (i, d) in dates.iter().enumerate() {
        match dates.get(i + 1) {
            Some(next) if key(next) == key(d) => {}
            _ => out.push(DayIdx(i)),
        }
    }
    out
}
