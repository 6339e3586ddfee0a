use std::collections::HashSet;
use std::path::Path;

use chrono::NaiveDate;

use super::{DailyBar, InstrumentId, MarketDataError, PriceStore};

pub const PRICES_HEADER: &str = "date,instrument,adj_close,volume,shares_outstanding,market_cap";
pub const FLOWS_HEADER: &str = "date,instrument,institutional_net,foreign_net";

fn open(path: &Path, expected: &str) -> Result<csv::Reader<std::fs::File>, MarketDataError> {
    let io_err = |e: &dyn std::fmt::Display| MarketDataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| io_err(&e))?;
    let found = rdr
        .headers()
        .map_err(|e| io_err(&e))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found != expected {
        return Err(MarketDataError::BadHeader {
            path: path.display().to_string(),
            expected: expected.to_string(),
            found,
        });
    }
    Ok(rdr)
}

struct Row {
    line: u64,
    record: csv::StringRecord,
}

impl Row {
    fn field(&self, i: usize, name: &str) -> Result<&str, MarketDataError> {
        self.record
            .get(i)
            .map(str::trim)
            .ok_or_else(|| self.malformed(format!("missing `{name}`")))
    }

    fn malformed(&self, reason: String) -> MarketDataError {
        MarketDataError::MalformedRow {
            line: self.line,
            reason,
        }
    }

    fn date(&self, i: usize, name: &str) -> Result<NaiveDate, MarketDataError> {
        let s = self.field(i, name)?;
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map_err(|_| self.malformed(format!("`{name}` is not an ISO-8601 date: `{s}`")))
    }

    fn parse<T: std::str::FromStr>(&self, i: usize, name: &str) -> Result<T, MarketDataError> {
        let s = self.field(i, name)?;
        s.parse()
            .map_err(|_| self.malformed(format!("cannot parse `{name}` from `{s}`")))
    }

    fn instrument(&self, i: usize) -> Result<InstrumentId, MarketDataError> {
        InstrumentId::new(self.field(i, "instrument")?).map_err(|_| self.malformed("empty instrument".to_string()))
    }
}

fn rows(rdr: csv::Reader<std::fs::File>, width: usize) -> impl Iterator<Item = Result<Row, MarketDataError>> {
    rdr.into_records().map(move |r| {
        let record = r.map_err(|e| MarketDataError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row = Row { line, record };
        if row.record.len() != width {
            return Err(row.malformed(format!("expected {width} fields, found {}", row.record.len())));
        }
        Ok(row)
    })
}

/// Reads `prices.csv`. The calendar is the union of all observed dates.
pub fn load_prices(path: impl AsRef<Path>) -> Result<PriceStore, MarketDataError> {
    let path = path.as_ref();
    let rdr = open(path, PRICES_HEADER)?;
    let mut seen = HashSet::new();
    let mut bars = Vec::new();
    for row in rows(rdr, 6) {
        let row = row?;
        let date = row.date(0, "date")?;
        let instrument = row.instrument(1)?;
        let adj_close: f64 = row.parse(2, "adj_close")?;
        let volume: u64 = row.parse(3, "volume")?;
        let shares_outstanding: u64 = row.parse(4, "shares_outstanding")?;
        let market_cap: f64 = row.parse(5, "market_cap")?;
        if adj_close <= 0.0 || !adj_close.is_finite() {
            return Err(MarketDataError::NonPositivePrice {
                line: row.line,
                instrument: instrument.to_string(),
                date,
            });
        }
        if shares_outstanding == 0 {
            return Err(row.malformed("shares_outstanding must be positive".into()));
        }
        if market_cap <= 0.0 || !market_cap.is_finite() {
            return Err(row.malformed("market_cap must be positive".into()));
        }
        if !seen.insert((instrument.clone(), date)) {
            return Err(MarketDataError::DuplicateBar {
                line: row.line,
                instrument: instrument.to_string(),
                date,
            });
        }
        bars.push((
            instrument,
            DailyBar {
                date,
                adj_close,
                volume,
                shares_outstanding,
                market_cap,
            },
        ));
    }
    PriceStore::from_bars(bars)
}

/// Reads `flows.csv` and returns `store` extended with the flow panel. The individual leg is
/// derived, never read.
pub fn load_flows(path: impl AsRef<Path>, store: &PriceStore) -> Result<PriceStore, MarketDataError> {
    let path = path.as_ref();
    let rdr = open(path, FLOWS_HEADER)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for row in rows(rdr, 4) {
        let row = row?;
        let date = row.date(0, "date")?;
        let instrument = row.instrument(1)?;
        let institutional: i64 = row.parse(2, "institutional_net")?;
        let foreign: i64 = row.parse(3, "foreign_net")?;
        if institutional.checked_add(foreign).is_none() {
            return Err(row.malformed("flow legs overflow".into()));
        }
        if store.instrument_index(&instrument).is_none() {
            return Err(MarketDataError::UnknownInstrument {
                instrument: instrument.to_string(),
            });
        }
        if store.calendar().index_of(date).is_none() {
            return Err(MarketDataError::DateOutsideCalendar { date });
        }
        if !seen.insert((instrument.clone(), date)) {
            return Err(row.malformed(format!("duplicate flow for {instrument} on {date}")));
        }
        out.push((instrument, date, institutional, foreign));
    }
    store.with_flows(out)
}
