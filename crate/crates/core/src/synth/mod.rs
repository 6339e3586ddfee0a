//! Synthetic markets with known ground truth, and a brute-force reference backtest.
//!
//! Every draw comes from ChaCha8 (`rand_chacha`) seeded with `seed_from_u64(seed)`. Prices,
//! flows, gaps and volumes use separate ChaCha streams of the same seed, so changing e.g.
//! the flow parameters never moves a price path.
//!
//! Return model per instrument `i` and trading day `t` in calendar month `m`:
//!
//! ```text
//! log P[i,t] - log P[i,t-1] = market[t] + (a[i,m] + premium[i,m]) / 21 + vol_daily * z[i,t]
//! a[i,m+1] = phi[i,m] * a[i,m] + sqrt(1 - phi[i,m]^2) * drift_vol * e[i,m+1]
//! ```
//!
//! `phi[i,m]` is `momentum_strength` for carriers and 0 otherwise, so non-carriers have an
//! independent drift every month and no persistence across months. Carriers, index
//! membership (top 50 / top 100 / all by market cap) and the premium are fixed at each
//! re-rank, every `rerank_months` months starting in January.

mod oracle;

pub use oracle::{
    oracle_backtest, OracleBar, OracleCohort, OracleError, OracleFlow, OracleInterval, OracleResult, OracleSpec,
    OracleSummary,
};

use chrono::{Datelike, NaiveDate, Weekday};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

use crate::marketdata::{DailyBar, InstrumentId, MarketDataError, PriceStore, FLOWS_HEADER, PRICES_HEADER};
use crate::universe::{
    intervals_from_runs, IndexId, MembershipCalendar, MembershipInterval, UniverseError, MEMBERSHIP_HEADER, OPEN_END,
};

const DAYS_PER_MONTH: f64 = 21.0;
const STREAM_FLOWS: u64 = 1;
const STREAM_GAPS: u64 = 2;
const STREAM_VOLUME: u64 = 3;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic market parameters: {0}")]
    InvalidParams(String),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Data(#[from] MarketDataError),
    #[error(transparent)]
    Universe(#[from] UniverseError),
}

/// Which instruments carry persistent drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentumCarrier {
    All,
    /// 1-based inclusive market-cap ranks at the latest re-rank.
    CapRanks {
        first: usize,
        last: usize,
    },
}

impl fmt::Display for MomentumCarrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MomentumCarrier::All => f.write_str("all"),
            MomentumCarrier::CapRanks { first, last } => write!(f, "{first}-{last}"),
        }
    }
}

impl FromStr for MomentumCarrier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(MomentumCarrier::All);
        }
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad carrier `{s}` (expected all or A-B)"))
        };
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| format!("bad carrier `{s}` (expected all or A-B)"))?;
        Ok(MomentumCarrier::CapRanks {
            first: parse(a)?,
            last: parse(b)?,
        })
    }
}

impl MomentumCarrier {
    fn contains(&self, rank: usize) -> bool {
        match *self {
            MomentumCarrier::All => true,
            MomentumCarrier::CapRanks { first, last } => (first..=last).contains(&(rank + 1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

/// Correlation between a group's daily net buying and the next month's drift.
/// The individual group is the negative sum of the other two and is not set directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowPredictiveness {
    pub institutional: f64,
    pub foreign: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n_instruments: usize,
    pub n_years: usize,
    pub seed: u64,
    /// Month-to-month persistence of carrier drift, in [-1, 1].
    pub momentum_strength: f64,
    pub momentum_carrier: MomentumCarrier,
    /// Extra monthly drift of carriers.
    pub carrier_premium: f64,
    /// Stationary standard deviation of the monthly drift.
    pub drift_vol: f64,
    /// Idiosyncratic daily log-return volatility.
    pub vol_daily: f64,
    /// Common daily log-return volatility.
    pub market_vol_daily: f64,
    /// Initial market cap distribution.
    pub cap_distribution: LogNormalParams,
    pub flow_predictiveness: FlowPredictiveness,
    /// Typical absolute daily net flow of one group as a fraction of shares outstanding.
    pub flow_scale: f64,
    /// Fraction of instruments with one trading halt.
    pub gap_fraction: f64,
    /// Halt length in trading days.
    pub gap_days: usize,
    pub rerank_months: u32,
    /// Sizes of the two smaller indexes; the largest index holds every instrument.
    pub index_sizes: (usize, usize),
    pub start: NaiveDate,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_instruments: 200,
            n_years: 12,
            seed: 0,
            momentum_strength: 0.9,
            momentum_carrier: MomentumCarrier::All,
            carrier_premium: 0.0,
            drift_vol: 0.03,
            vol_daily: 0.01,
            market_vol_daily: 0.01,
            cap_distribution: LogNormalParams { mu: 26.0, sigma: 1.2 },
            flow_predictiveness: FlowPredictiveness {
                institutional: 0.1,
                foreign: 0.1,
            },
            flow_scale: 0.001,
            gap_fraction: 0.015,
            gap_days: 40,
            rerank_months: 6,
            index_sizes: (50, 100),
            start: NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"),
        }
    }
}

impl SynthParams {
    /// No persistence anywhere.
    pub fn null_market(seed: u64) -> Self {
        Self {
            seed,
            momentum_strength: 0.0,
            ..Self::default()
        }
    }

    /// Persistent drift in every instrument.
    pub fn momentum_market(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Persistent drift and a premium confined to cap ranks 51 to 100.
    pub fn midcap_carrier_market(seed: u64) -> Self {
        Self {
            seed,
            momentum_carrier: MomentumCarrier::CapRanks { first: 51, last: 100 },
            carrier_premium: 0.004,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidParams(m));
        let (f, h) = self.index_sizes;
        if self.n_instruments < 2 {
            return bad(format!("need at least 2 instruments, got {}", self.n_instruments));
        }
        if !(1..=h).contains(&f) || h > self.n_instruments {
            return bad(format!(
                "index sizes must satisfy 1 <= {f} <= {h} <= {}",
                self.n_instruments
            ));
        }
        if self.n_years == 0 || self.n_years > 100 {
            return bad(format!("n_years must be in 1..=100, got {}", self.n_years));
        }
        if !(-1.0..=1.0).contains(&self.momentum_strength) {
            return bad(format!(
                "momentum_strength must be in [-1, 1], got {}",
                self.momentum_strength
            ));
        }
        for (name, p) in [
            ("institutional", self.flow_predictiveness.institutional),
            ("foreign", self.flow_predictiveness.foreign),
        ] {
            if !(-1.0..=1.0).contains(&p) {
                return bad(format!("{name} flow predictiveness must be in [-1, 1], got {p}"));
            }
        }
        for (name, v) in [
            ("drift_vol", self.drift_vol),
            ("vol_daily", self.vol_daily),
            ("market_vol_daily", self.market_vol_daily),
            ("cap sigma", self.cap_distribution.sigma),
            ("flow_scale", self.flow_scale),
        ] {
            if v < 0.0 || !v.is_finite() {
                return bad(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if !self.carrier_premium.is_finite() || !self.cap_distribution.mu.is_finite() {
            return bad("carrier_premium and cap mu must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.gap_fraction) {
            return bad(format!("gap_fraction must be in [0, 1], got {}", self.gap_fraction));
        }
        if self.rerank_months == 0 || 12 % self.rerank_months != 0 {
            return bad(format!("rerank_months must divide 12, got {}", self.rerank_months));
        }
        if let MomentumCarrier::CapRanks { first, last } = self.momentum_carrier {
            if first == 0 || first > last {
                return bad(format!("carrier ranks {first}-{last} are not a valid 1-based range"));
            }
        }
        Ok(())
    }
}

/// A generated market held in memory, row by row, in CSV order.
#[derive(Debug, Clone)]
pub struct SynthMarket {
    pub params: SynthParams,
    pub dates: Vec<NaiveDate>,
    pub instruments: Vec<InstrumentId>,
    /// Sorted by (date, instrument).
    pub bars: Vec<(InstrumentId, DailyBar)>,
    /// `(instrument, date, institutional_net, foreign_net)`, sorted by (date, instrument).
    pub flows: Vec<(InstrumentId, NaiveDate, i64, i64)>,
    pub membership: Vec<MembershipInterval>,
    /// Instrument indices with a trading halt.
    pub gapped: Vec<usize>,
}

/// Weekdays from `start` through the end of year `start.year() + n_years - 1`.
pub fn weekday_calendar(start: NaiveDate, n_years: usize) -> Vec<NaiveDate> {
    let end = NaiveDate::from_ymd_opt(start.year() + n_years as i32 - 1, 12, 31).expect("valid year");
    start
        .iter_days()
        .take_while(|d| *d <= end)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Cap ranks (0 = largest), ties broken by instrument order.
fn cap_ranks(caps: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..caps.len()).collect();
    order.sort_by(|&a, &b| caps[b].total_cmp(&caps[a]).then(a.cmp(&b)));
    let mut ranks = vec![0; caps.len()];
    for (r, i) in order.into_iter().enumerate() {
        ranks[i] = r;
    }
    ranks
}

pub fn generate_market(params: &SynthParams) -> Result<SynthMarket, SynthError> {
    params.validate()?;
    let n = params.n_instruments;
    let dates = weekday_calendar(params.start, params.n_years);
    let width = n.to_string().len().max(3);
    let instruments: Vec<InstrumentId> = (1..=n)
        .map(|i| InstrumentId::new(format!("S{i:0width$}")).expect("non-empty"))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut flow_rng = stream(params.seed, STREAM_FLOWS);
    let mut gap_rng = stream(params.seed, STREAM_GAPS);
    let mut vol_rng = stream(params.seed, STREAM_VOLUME);

    let cap0 = LogNormal::new(params.cap_distribution.mu, params.cap_distribution.sigma)
        .map_err(|e| SynthError::InvalidParams(e.to_string()))?;
    let price0 = LogNormal::new(10_000f64.ln(), 0.5).expect("valid");
    let mut log_price = Vec::with_capacity(n);
    let mut shares = Vec::with_capacity(n);
    for _ in 0..n {
        let cap: f64 = cap0.sample(&mut rng);
        let px: f64 = price0.sample(&mut rng);
        let s = (cap / px).round().max(1.0) as u64;
        log_price.push(px.ln());
        shares.push(s);
    }
    let turnover = LogNormal::new(0.005f64.ln(), 0.5).expect("valid");
    let base_turnover: Vec<f64> = (0..n).map(|_| turnover.sample(&mut vol_rng)).collect();
    let volume_noise = LogNormal::new(0.0, 0.5).expect("valid");

    // One halt per gapped instrument, placed after the first year so ranks are established.
    let n_gapped = (params.gap_fraction * n as f64).round() as usize;
    let mut gapped: Vec<usize> = sample(&mut gap_rng, n, n_gapped).into_vec();
    gapped.sort_unstable();
    let mut halted = vec![None; n];
    let gap_len = params.gap_days.min(dates.len());
    let earliest = dates.len().min(252);
    for &i in &gapped {
        let latest = dates.len() - gap_len;
        let begin = if latest > earliest {
            gap_rng.random_range(earliest..=latest)
        } else {
            0
        };
        halted[i] = Some(begin..begin + gap_len);
    }

    let drift_noise = Normal::new(0.0, params.drift_vol).expect("finite");
    let phi = params.momentum_strength;
    let mut carrier = vec![false; n];
    let mut drift_now: Vec<f64> = (0..n).map(|_| drift_noise.sample(&mut rng)).collect();
    let mut drift_next = vec![0.0; n];
    let mut snapshots: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut bars = Vec::with_capacity(n * dates.len());
    let mut flows = Vec::new();
    let (inst_p, for_p) = (
        params.flow_predictiveness.institutional,
        params.flow_predictiveness.foreign,
    );

    let mut day = 0;
    let mut first_month = true;
    while day < dates.len() {
        let month = (dates[day].year(), dates[day].month());
        let month_end = day
            + dates[day..]
                .iter()
                .take_while(|d| (d.year(), d.month()) == month)
                .count();

        if first_month || (month.1 - 1).is_multiple_of(params.rerank_months) {
            let caps: Vec<f64> = (0..n).map(|i| round4(log_price[i].exp()) * shares[i] as f64).collect();
            let ranks = cap_ranks(&caps);
            for i in 0..n {
                carrier[i] = params.momentum_carrier.contains(ranks[i]);
            }
            snapshots.push((day, ranks));
        }
        if first_month {
            first_month = false;
        } else {
            std::mem::swap(&mut drift_now, &mut drift_next);
        }
        // Next month's drift is drawn now so this month's flows can lean on it.
        for i in 0..n {
            let p = if carrier[i] { phi } else { 0.0 };
            let e: f64 = rng.sample(StandardNormal);
            drift_next[i] = p * drift_now[i] + (1.0 - p * p).sqrt() * params.drift_vol * e;
        }

        for (t, &date) in dates.iter().enumerate().take(month_end).skip(day) {
            let market = params.market_vol_daily * rng.sample::<f64, _>(StandardNormal);
            for i in 0..n {
                let premium = if carrier[i] { params.carrier_premium } else { 0.0 };
                let z: f64 = rng.sample(StandardNormal);
                log_price[i] += market + (drift_now[i] + premium) / DAYS_PER_MONTH + params.vol_daily * z;

                let signal = if params.drift_vol > 0.0 {
                    drift_next[i] / params.drift_vol
                } else {
                    0.0
                };
                let net = |p: f64, r: &mut ChaCha8Rng| {
                    let noise: f64 = r.sample(StandardNormal);
                    (shares[i] as f64 * params.flow_scale * (p * signal + (1.0 - p * p).sqrt() * noise)).round() as i64
                };
                let ins = net(inst_p, &mut flow_rng);
                let frn = net(for_p, &mut flow_rng);
                let volume_draw: f64 = volume_noise.sample(&mut vol_rng);

                if halted[i].as_ref().is_some_and(|r| r.contains(&t)) {
                    continue;
                }
                let close = round4(log_price[i].exp());
                if close.is_nan() || close <= 0.0 {
                    return Err(SynthError::InvalidParams(format!(
                        "price of {} underflowed",
                        instruments[i]
                    )));
                }
                let volume = (shares[i] as f64 * base_turnover[i] * volume_draw).round() as u64;
                bars.push((
                    instruments[i].clone(),
                    DailyBar {
                        date,
                        adj_close: close,
                        volume,
                        shares_outstanding: shares[i],
                        market_cap: close * shares[i] as f64,
                    },
                ));
                flows.push((instruments[i].clone(), date, ins, frn));
            }
        }
        day = month_end;
    }

    let membership = membership_from_snapshots(params, &dates, &instruments, &snapshots);
    Ok(SynthMarket {
        params: params.clone(),
        dates,
        instruments,
        bars,
        flows,
        membership,
        gapped,
    })
}

fn membership_from_snapshots(
    params: &SynthParams,
    dates: &[NaiveDate],
    instruments: &[InstrumentId],
    snapshots: &[(usize, Vec<usize>)],
) -> Vec<MembershipInterval> {
    let (f, h) = params.index_sizes;
    let spans: Vec<(NaiveDate, NaiveDate)> = snapshots
        .iter()
        .enumerate()
        .map(|(k, (start, _))| {
            let end = snapshots.get(k + 1).map_or(OPEN_END, |(next, _)| dates[next - 1]);
            (dates[*start], end)
        })
        .collect();
    let mut out = Vec::new();
    for (index, size) in [(IndexId::F, f), (IndexId::H, h), (IndexId::T, instruments.len())] {
        for (i, id) in instruments.iter().enumerate() {
            let runs: Vec<(NaiveDate, NaiveDate, bool)> = snapshots
                .iter()
                .zip(&spans)
                .map(|((_, ranks), &(s, e))| (s, e, ranks[i] < size))
                .collect();
            out.extend(intervals_from_runs(index, id, &runs));
        }
    }
    out
}

fn write_file(dir: &Path, name: &str, body: &[u8]) -> Result<(), SynthError> {
    let path = dir.join(name);
    let io = |e: std::io::Error| SynthError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut file = fs::File::create(&path).map_err(io)?;
    file.write_all(body).map_err(io)?;
    Ok(())
}

impl SynthMarket {
    pub fn prices_csv(&self) -> String {
        let mut s = String::with_capacity(self.bars.len() * 56);
        s.push_str(PRICES_HEADER);
        s.push('\n');
        for (id, b) in &self.bars {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                b.date, id, b.adj_close, b.volume, b.shares_outstanding, b.market_cap
            ));
        }
        s
    }

    pub fn flows_csv(&self) -> String {
        let mut s = String::with_capacity(self.flows.len() * 36);
        s.push_str(FLOWS_HEADER);
        s.push('\n');
        for (id, date, ins, frn) in &self.flows {
            s.push_str(&format!("{date},{id},{ins},{frn}\n"));
        }
        s
    }

    pub fn membership_csv(&self) -> String {
        let mut s = String::from(MEMBERSHIP_HEADER);
        s.push('\n');
        for iv in &self.membership {
            s.push_str(&format!("{},{},{},{}\n", iv.index, iv.instrument, iv.start, iv.end));
        }
        s
    }

    /// Writes `prices.csv`, `flows.csv` and `membership.csv` into `dir`.
    pub fn write_csvs(&self, dir: impl AsRef<Path>) -> Result<(), SynthError> {
        let dir = dir.as_ref();
        write_file(dir, "prices.csv", self.prices_csv().as_bytes())?;
        write_file(dir, "flows.csv", self.flows_csv().as_bytes())?;
        write_file(dir, "membership.csv", self.membership_csv().as_bytes())
    }

    /// Store with flows attached, and the membership calendar.
    pub fn to_store(&self) -> Result<(PriceStore, MembershipCalendar), SynthError> {
        let store = PriceStore::from_bars(self.bars.iter().cloned())?.with_flows(self.flows.iter().cloned())?;
        let membership = MembershipCalendar::from_intervals(self.membership.iter().cloned(), &store)?;
        Ok((store, membership))
    }

    /// The market as plain rows for [`oracle_backtest`].
    pub fn oracle_inputs(&self) -> (Vec<OracleBar>, Vec<OracleFlow>, Vec<OracleInterval>) {
        let bars = self
            .bars
            .iter()
            .map(|(id, b)| OracleBar {
                instrument: id.to_string(),
                date: b.date,
                close: b.adj_close,
                volume: b.volume,
                shares: b.shares_outstanding,
                cap: b.market_cap,
            })
            .collect();
        let flows = self
            .flows
            .iter()
            .map(|(id, date, ins, frn)| OracleFlow {
                instrument: id.to_string(),
                date: *date,
                institutional: *ins,
                foreign: *frn,
            })
            .collect();
        let membership = self
            .membership
            .iter()
            .map(|iv| OracleInterval {
                index: iv.index.to_string(),
                instrument: iv.instrument.to_string(),
                start: iv.start,
                end: iv.end,
            })
            .collect();
        (bars, flows, membership)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthParams {
        SynthParams {
            n_instruments: 20,
            n_years: 2,
            seed,
            index_sizes: (5, 10),
            gap_fraction: 0.1,
            ..SynthParams::default()
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = generate_market(&small(3)).unwrap();
        let b = generate_market(&small(3)).unwrap();
        assert_eq!(a.prices_csv(), b.prices_csv());
        assert_eq!(a.flows_csv(), b.flows_csv());
        assert_eq!(a.membership_csv(), b.membership_csv());
        let c = generate_market(&small(4)).unwrap();
        assert_ne!(a.prices_csv(), c.prices_csv());
    }

    #[test]
    fn flow_parameters_do_not_move_prices() {
        let mut p = small(5);
        let a = generate_market(&p).unwrap();
        p.flow_predictiveness.institutional = -0.7;
        p.flow_scale = 0.01;
        let b = generate_market(&p).unwrap();
        assert_eq!(a.prices_csv(), b.prices_csv());
        assert_ne!(a.flows_csv(), b.flows_csv());
    }

    #[test]
    fn membership_sizes_and_nesting() {
        let m = generate_market(&small(1)).unwrap();
        let (store, cal) = m.to_store().unwrap();
        assert!(cal.validate_nesting().is_empty());
        for &d in store.calendar().dates() {
            assert_eq!(cal.base_members(IndexId::F, d).len(), 5);
            assert_eq!(cal.base_members(IndexId::H, d).len(), 10);
            assert_eq!(cal.base_members(IndexId::T, d).len(), 20);
        }
    }

    #[test]
    fn gaps_remove_bars() {
        let m = generate_market(&small(2)).unwrap();
        assert_eq!(m.gapped.len(), 2);
        let (store, _) = m.to_store().unwrap();
        for i in 0..20 {
            let expected = if m.gapped.contains(&i) {
                m.dates.len() - 40
            } else {
                m.dates.len()
            };
            assert_eq!(store.bar_count(i), expected);
        }
    }

    #[test]
    fn calendar_is_weekdays() {
        let d = weekday_calendar(NaiveDate::from_ymd_opt(2000, 1, 3).unwrap(), 1);
        assert_eq!(d.len(), 260);
        assert_eq!(*d.last().unwrap(), NaiveDate::from_ymd_opt(2000, 12, 29).unwrap());
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = small(0);
        p.momentum_strength = 1.5;
        assert!(matches!(generate_market(&p), Err(SynthError::InvalidParams(_))));
        let mut p = small(0);
        p.index_sizes = (11, 10);
        assert!(matches!(generate_market(&p), Err(SynthError::InvalidParams(_))));
        assert_eq!(
            "51-100".parse::<MomentumCarrier>().unwrap(),
            MomentumCarrier::CapRanks { first: 51, last: 100 }
        );
        assert!("x".parse::<MomentumCarrier>().is_err());
    }
}
