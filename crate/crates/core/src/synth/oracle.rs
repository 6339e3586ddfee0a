//! Brute-force reference for sequential backtests on tiny datasets.
//!
//! Works on plain rows and strings only and recomputes everything by direct enumeration:
//! calendar, period ends, universe sets, coverage, scores, the sort, group boundaries and
//! per-constituent returns as products of bar-to-bar ratios. Meant for a handful of
//! instruments; every lookup is a linear scan.

use chrono::{Datelike, NaiveDate};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

const MIN_COVERAGE: f64 = 0.9;
const STALENESS_LIMIT: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleBar {
    pub instrument: String,
    pub date: NaiveDate,
    pub close: f64,
    pub volume: u64,
    pub shares: u64,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleFlow {
    pub instrument: String,
    pub date: NaiveDate,
    pub institutional: i64,
    pub foreign: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleInterval {
    /// `50`, `100` or `200`.
    pub index: String,
    pub instrument: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpec {
    pub universe: String,
    /// `momentum`, `size`, `liquidity`, `flow:individual`, `flow:institutional` or `flow:foreign`.
    pub criterion: String,
    /// `monthly` or `weekly`.
    pub frequency: String,
    pub lookback: usize,
    pub holding: usize,
    pub groups: usize,
    pub cost_per_basket: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCohort {
    pub formation_date: NaiveDate,
    pub liquidation_date: NaiveDate,
    pub long: Vec<(String, f64)>,
    pub short: Vec<(String, f64)>,
    pub raw_return_total: f64,
    pub ineligible: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSummary {
    pub mean_raw: f64,
    pub volatility: f64,
    pub profitability: i8,
    pub implemented_return: f64,
    pub sharpe: Option<f64>,
    pub t_stat: Option<f64>,
    pub reject_zero_mean: bool,
    pub n_periods: usize,
    pub cost_per_period: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub cohorts: Vec<OracleCohort>,
    /// `(liquidation date, raw / K)`.
    pub series: Vec<(NaiveDate, f64)>,
    pub summary: OracleSummary,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("insufficient history")]
    InsufficientHistory,
    #[error("every formation was skipped")]
    EmptyUniverse,
    #[error("data error: {0}")]
    Data(String),
    #[error("series too short: {0}")]
    SeriesTooShort(usize),
}

struct Tables<'a> {
    dates: Vec<NaiveDate>,
    bars: BTreeMap<(&'a str, usize), &'a OracleBar>,
    flows: BTreeMap<(&'a str, usize), (i64, i64)>,
}

impl<'a> Tables<'a> {
    fn bar(&self, inst: &str, day: usize) -> Option<&'a OracleBar> {
        self.bars.get(&(inst, day)).copied()
    }

    fn last_print(&self, inst: &str, day: usize) -> Option<(usize, &'a OracleBar)> {
        (0..=day).rev().find_map(|d| self.bar(inst, d).map(|b| (d, b)))
    }

    fn price_at(&self, inst: &str, day: usize) -> Option<&'a OracleBar> {
        let (at, bar) = self.last_print(inst, day)?;
        (day - at <= STALENESS_LIMIT).then_some(bar)
    }
}

fn period_ends(dates: &[NaiveDate], weekly: bool) -> Vec<usize> {
    let key = |d: &NaiveDate| {
        if weekly {
            (d.iso_week().year(), d.iso_week().week())
        } else {
            (d.year(), d.month())
        }
    };
    let mut out = Vec::new();
    for i in 0..dates.len() {
        if i + 1 == dates.len() || key(&dates[i + 1]) != key(&dates[i]) {
            out.push(i);
        }
    }
    out
}

fn universe_members(
    expr: &str,
    membership: &[OracleInterval],
    date: NaiveDate,
) -> Result<BTreeSet<String>, OracleError> {
    let base = |token: &str| -> Result<BTreeSet<String>, OracleError> {
        if !matches!(token, "50" | "100" | "200") {
            return Err(OracleError::InvalidSpec(format!("unknown index `{token}`")));
        }
        Ok(membership
            .iter()
            .filter(|iv| iv.index == token && iv.start <= date && date <= iv.end)
            .map(|iv| iv.instrument.clone())
            .collect())
    };
    let text: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut op = '+';
    for c in text.chars() {
        if c == '+' || c == '-' {
            tokens.push((op, std::mem::take(&mut current)));
            op = c;
        } else {
            current.push(c);
        }
    }
    tokens.push((op, current));
    let mut set = BTreeSet::new();
    for (op, token) in tokens {
        let s = base(&token)?;
        if op == '+' {
            set = set.union(&s).cloned().collect();
        } else {
            set = set.difference(&s).cloned().collect();
        }
    }
    let all = base("200")?;
    Ok(set.intersection(&all).cloned().collect())
}

/// Product of bar-to-bar ratios from the bar used at `from` to the last bar at or before `to`.
fn compounded(t: &Tables, inst: &str, from: usize, to: usize) -> f64 {
    let mut growth = 1.0;
    let mut prev = t.last_print(inst, from).expect("entry bar").1.close;
    for d in from + 1..=to {
        if let Some(b) = t.bar(inst, d) {
            growth *= b.close / prev;
            prev = b.close;
        }
    }
    growth - 1.0
}

pub fn oracle_backtest(
    spec: &OracleSpec,
    bars: &[OracleBar],
    flows: &[OracleFlow],
    membership: &[OracleInterval],
) -> Result<OracleResult, OracleError> {
    let (j, k, g) = (spec.lookback, spec.holding, spec.groups);
    if j == 0 || k == 0 || g < 2 {
        return Err(OracleError::InvalidSpec("J, K >= 1 and G >= 2".into()));
    }
    let weekly = match spec.frequency.as_str() {
        "monthly" => false,
        "weekly" => true,
        other => return Err(OracleError::InvalidSpec(format!("frequency {other}"))),
    };
    let dates: Vec<NaiveDate> = bars
        .iter()
        .map(|b| b.date)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let day_of = |d: NaiveDate| dates.iter().position(|x| *x == d);
    let mut tables = Tables {
        dates: dates.clone(),
        bars: BTreeMap::new(),
        flows: BTreeMap::new(),
    };
    for b in bars {
        tables
            .bars
            .insert((b.instrument.as_str(), day_of(b.date).expect("bar date")), b);
    }
    for f in flows {
        let day = day_of(f.date).ok_or_else(|| OracleError::Data(format!("flow date {}", f.date)))?;
        tables
            .flows
            .insert((f.instrument.as_str(), day), (f.institutional, f.foreign));
    }
    let marks = period_ends(&tables.dates, weekly);
    if j + k >= marks.len() {
        return Err(OracleError::InsufficientHistory);
    }

    let mut cohorts = Vec::new();
    let mut f = j;
    while f + k < marks.len() {
        let (anchor, end, exit) = (marks[f - j], marks[f], marks[f + k]);
        let members = universe_members(&spec.universe, membership, tables.dates[end])?;
        let mut scored: Vec<(f64, String)> = Vec::new();
        let mut ineligible = 0;
        for inst in &members {
            let have = (anchor + 1..=end).filter(|d| tables.bar(inst, *d).is_some()).count();
            let total = end - anchor;
            if tables.bar(inst, end).is_none() || (have as f64) < MIN_COVERAGE * total as f64 {
                ineligible += 1;
                continue;
            }
            let score = match spec.criterion.as_str() {
                "momentum" => match (tables.price_at(inst, anchor), tables.price_at(inst, end)) {
                    (Some(a), Some(b)) => Some(b.close / a.close - 1.0),
                    _ => None,
                },
                "size" => tables.price_at(inst, end).map(|b| b.cap),
                "liquidity" => {
                    let turnovers: Vec<f64> = (anchor + 1..=end)
                        .filter_map(|d| tables.bar(inst, d))
                        .map(|b| b.volume as f64 / b.shares as f64)
                        .collect();
                    Some(turnovers.iter().sum::<f64>() / turnovers.len() as f64)
                }
                c if c.starts_with("flow:") => {
                    let mut net: i64 = 0;
                    for d in anchor + 1..=end {
                        if let Some(&(ins, frn)) = tables.flows.get(&(inst.as_str(), d)) {
                            net += match c {
                                "flow:institutional" => ins,
                                "flow:foreign" => frn,
                                "flow:individual" => -(ins + frn),
                                _ => return Err(OracleError::InvalidSpec(c.to_string())),
                            };
                        }
                    }
                    tables.price_at(inst, end).map(|b| net as f64 / b.shares as f64)
                }
                other => return Err(OracleError::InvalidSpec(format!("criterion {other}"))),
            };
            match score {
                Some(s) if s.is_finite() => scored.push((s, inst.clone())),
                _ => ineligible += 1,
            }
        }
        if scored.len() < g {
            f += k;
            continue;
        }
        // Explicit ascending sort; names break ties.
        for a in 0..scored.len() {
            for b in 0..scored.len() - 1 - a {
                let swap =
                    scored[b].0 > scored[b + 1].0 || (scored[b].0 == scored[b + 1].0 && scored[b].1 > scored[b + 1].1);
                if swap {
                    scored.swap(b, b + 1);
                }
            }
        }
        let n = scored.len();
        let bottom: Vec<&String> = scored[0..n / g].iter().map(|s| &s.1).collect();
        let top: Vec<&String> = scored[(g - 1) * n / g..n].iter().map(|s| &s.1).collect();
        let mut long: Vec<(String, f64)> = top.iter().map(|s| ((*s).clone(), 1.0 / top.len() as f64)).collect();
        let mut short: Vec<(String, f64)> = bottom
            .iter()
            .map(|s| ((*s).clone(), -1.0 / bottom.len() as f64))
            .collect();
        long.sort_by(|a, b| a.0.cmp(&b.0));
        short.sort_by(|a, b| a.0.cmp(&b.0));

        let mut raw = 0.0;
        for (inst, w) in long.iter().chain(&short) {
            if tables.price_at(inst, end).is_none() {
                return Err(OracleError::Data(format!("no entry price for {inst}")));
            }
            raw += w * compounded(&tables, inst, end, exit);
        }
        cohorts.push(OracleCohort {
            formation_date: tables.dates[end],
            liquidation_date: tables.dates[exit],
            long,
            short,
            raw_return_total: raw,
            ineligible,
        });
        f += k;
    }
    if cohorts.is_empty() {
        return Err(OracleError::EmptyUniverse);
    }

    let series: Vec<(NaiveDate, f64)> = cohorts
        .iter()
        .map(|c| (c.liquidation_date, c.raw_return_total / k as f64))
        .collect();
    let n = series.len();
    if n < 2 {
        return Err(OracleError::SeriesTooShort(n));
    }
    let mean = series.iter().map(|s| s.1).sum::<f64>() / n as f64;
    let var = series.iter().map(|s| (s.1 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let cost = 2.0 * spec.cost_per_basket / k as f64;
    let implemented = mean.abs() - cost;
    let (t_stat, reject) = if sd == 0.0 {
        (None, mean != 0.0)
    } else {
        let t = mean * (n as f64).sqrt() / sd;
        let crit = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("df > 0")
            .inverse_cdf(0.975);
        (Some(t), t.abs() > crit)
    };
    Ok(OracleResult {
        cohorts,
        series,
        summary: OracleSummary {
            mean_raw: mean,
            volatility: sd,
            profitability: if mean >= 0.0 { 1 } else { -1 },
            implemented_return: implemented,
            sharpe: (sd > 0.0).then(|| implemented / sd),
            t_stat,
            reject_zero_mean: reject,
            n_periods: n,
            cost_per_period: cost,
        },
    })
}
