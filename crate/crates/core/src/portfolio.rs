//! Quantile grouping and the dollar-neutral long-short book.

use std::io::Write;

use chrono::NaiveDate;
use thiserror::Error;

use crate::criteria::{Criterion, ScoreVector};
use crate::marketdata::{DayIdx, MarketDataError, PriceStore};

/// Instruments split into `G` ordered groups: group 0 holds the lowest scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedGroups {
    pub date: NaiveDate,
    pub formation: DayIdx,
    /// Each group lists instrument indices in ascending id order.
    pub groups: Vec<Vec<usize>>,
}

impl RankedGroups {
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongShortPortfolio {
    pub formation: DayIdx,
    pub date: NaiveDate,
    /// Top group, equal positive weights summing to 1.
    pub long: Vec<(usize, f64)>,
    /// Bottom group, equal negative weights summing to -1.
    pub short: Vec<(usize, f64)>,
    pub universe_label: String,
    pub criterion: Criterion,
}

impl LongShortPortfolio {
    pub fn positions(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.long.iter().chain(self.short.iter()).copied()
    }

    /// Writes `formation_date,side,instrument,weight` rows (no header).
    pub fn write_csv<W: Write>(&self, store: &PriceStore, out: &mut W) -> std::io::Result<()> {
        for (side, legs) in [("long", &self.long), ("short", &self.short)] {
            for (inst, w) in legs {
                writeln!(out, "{},{},{},{}", self.date, side, store.instruments()[*inst], w)?;
            }
        }
        Ok(())
    }
}

pub const PORTFOLIO_HEADER: &str = "formation_date,side,instrument,weight";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PortfolioError {
    #[error("cannot split {count} instruments into {groups} groups")]
    TooFewInstruments { count: usize, groups: usize },
    #[error("group count must be at least 2, got {0}")]
    InvalidGroupCount(usize),
    #[error("extreme group is empty")]
    EmptyExtremeGroup,
    #[error(transparent)]
    Data(#[from] MarketDataError),
}

/// Sorts ascending by `(score, instrument id)` and cuts at `floor(g * N / G)`.
pub fn rank_and_group(scores: &ScoreVector, group_count: usize) -> Result<RankedGroups, PortfolioError> {
    if group_count < 2 {
        return Err(PortfolioError::InvalidGroupCount(group_count));
    }
    let n = scores.entries.len();
    if n < group_count {
        return Err(PortfolioError::TooFewInstruments {
            count: n,
            groups: group_count,
        });
    }
    let mut sorted = scores.entries.clone();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let groups = (0..group_count)
        .map(|g| {
            let lo = g * n / group_count;
            let hi = (g + 1) * n / group_count;
            let mut members: Vec<usize> = sorted[lo..hi].iter().map(|e| e.0).collect();
            members.sort_unstable();
            members
        })
        .collect();
    Ok(RankedGroups {
        date: scores.date,
        formation: scores.formation,
        groups,
    })
}

/// Long the top group, short the bottom group, equal weights within each leg.
pub fn build_long_short(
    groups: &RankedGroups,
    universe_label: &str,
    criterion: Criterion,
) -> Result<LongShortPortfolio, PortfolioError> {
    let (bottom, top) = match (groups.groups.first(), groups.groups.last()) {
        (Some(b), Some(t)) if !b.is_empty() && !t.is_empty() => (b, t),
        _ => return Err(PortfolioError::EmptyExtremeGroup),
    };
    let lw = 1.0 / top.len() as f64;
    let sw = -1.0 / bottom.len() as f64;
    Ok(LongShortPortfolio {
        formation: groups.formation,
        date: groups.date,
        long: top.iter().map(|&i| (i, lw)).collect(),
        short: bottom.iter().map(|&i| (i, sw)).collect(),
        universe_label: universe_label.to_string(),
        criterion,
    })
}

/// Buy-and-hold return of one constituent from `t0` to `t1`.
///
/// The entry price must be available (forward-filled within the staleness limit). The exit
/// uses the last print at or before `t1`, so a constituent that stops trading realises its
/// return to the last print and then sits in cash.
pub fn holding_return(store: &PriceStore, inst: usize, t0: DayIdx, t1: DayIdx) -> Result<f64, MarketDataError> {
    let entry = store.price_at(inst, t0)?.adj_close;
    let exit = store
        .last_print(inst, t1)
        .map(|(_, b)| b.adj_close)
        .expect("a bar exists at or before entry");
    Ok(exit / entry - 1.0)
}

/// Return between two dates using the last print at each end; zero when nothing traded.
pub fn step_return(store: &PriceStore, inst: usize, t0: DayIdx, t1: DayIdx) -> f64 {
    match (store.last_print(inst, t0), store.last_print(inst, t1)) {
        (Some((_, a)), Some((_, b))) => b.adj_close / a.adj_close - 1.0,
        _ => 0.0,
    }
}

/// Raw return of the long-short book held from `t0` to `t1`.
pub fn portfolio_return(
    portfolio: &LongShortPortfolio,
    store: &PriceStore,
    t0: DayIdx,
    t1: DayIdx,
) -> Result<f64, PortfolioError> {
    let mut total = 0.0;
    for (inst, w) in portfolio.positions() {
        total += w * holding_return(store, inst, t0, t1)?;
    }
    Ok(total)
}

/// Equal-weighted long-only return of one group.
pub fn group_return(store: &PriceStore, members: &[usize], t0: DayIdx, t1: DayIdx) -> Result<f64, PortfolioError> {
    if members.is_empty() {
        return Err(PortfolioError::EmptyExtremeGroup);
    }
    let mut total = 0.0;
    for &inst in members {
        total += holding_return(store, inst, t0, t1)?;
    }
    Ok(total / members.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::{DailyBar, InstrumentId};

    fn sv(scores: &[f64]) -> ScoreVector {
        ScoreVector {
            date: NaiveDate::from_ymd_opt(2021, 1, 29).unwrap(),
            formation: DayIdx(0),
            entries: scores.iter().copied().enumerate().collect(),
            ineligible: 0,
        }
    }

    /// Group sizes from the boundary formula, computed independently of `rank_and_group`.
    fn boundary_sizes(n: usize, g: usize) -> Vec<usize> {
        (1..=g).map(|k| (k * n) / g - ((k - 1) * n) / g).collect()
    }

    #[test]
    fn decile_sizes() {
        let scores: Vec<f64> = (0..200).map(|i| i as f64).collect();
        assert_eq!(rank_and_group(&sv(&scores), 10).unwrap().sizes(), vec![20; 10]);
        assert_eq!(rank_and_group(&sv(&scores), 5).unwrap().sizes(), vec![40; 5]);
        let scores: Vec<f64> = (0..47).map(|i| (i * 7 % 47) as f64).collect();
        let sizes = rank_and_group(&sv(&scores), 10).unwrap().sizes();
        assert_eq!(sizes, boundary_sizes(47, 10));
        assert_eq!(sizes, vec![4, 5, 5, 4, 5, 5, 4, 5, 5, 5]);
    }

    #[test]
    fn grouping_errors() {
        assert_eq!(
            rank_and_group(&sv(&[1.0, 2.0]), 3),
            Err(PortfolioError::TooFewInstruments { count: 2, groups: 3 })
        );
        assert_eq!(
            rank_and_group(&sv(&[1.0, 2.0]), 1),
            Err(PortfolioError::InvalidGroupCount(1))
        );
    }

    #[test]
    fn ties_break_by_instrument() {
        let g = rank_and_group(&sv(&[1.0, 1.0, 1.0, 1.0]), 2).unwrap();
        assert_eq!(g.groups, vec![vec![0, 1], vec![2, 3]]);
        let mut rev = sv(&[1.0, 1.0, 1.0, 1.0]);
        rev.entries.reverse();
        assert_eq!(rank_and_group(&rev, 2).unwrap(), g);
    }

    #[test]
    fn long_short_weights() {
        let g = RankedGroups {
            date: NaiveDate::from_ymd_opt(2021, 1, 29).unwrap(),
            formation: DayIdx(0),
            groups: vec![vec![2, 3], vec![0, 1]],
        };
        let p = build_long_short(&g, "200", Criterion::CumulativeReturn).unwrap();
        assert_eq!(p.long, vec![(0, 0.5), (1, 0.5)]);
        assert_eq!(p.short, vec![(2, -0.5), (3, -0.5)]);

        let scores: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let p = build_long_short(&rank_and_group(&sv(&scores), 10).unwrap(), "200", Criterion::MarketCap).unwrap();
        assert_eq!(p.long.len(), 20);
        assert!(p.long.iter().all(|(_, w)| *w == 0.05));
        assert!(p.short.iter().all(|(_, w)| *w == -0.05));

        let scores: Vec<f64> = (0..47).map(|i| i as f64).collect();
        let sizes = boundary_sizes(47, 10);
        let p = build_long_short(&rank_and_group(&sv(&scores), 10).unwrap(), "200", Criterion::MarketCap).unwrap();
        assert_eq!(p.long.len(), sizes[9]);
        assert_eq!(p.short.len(), sizes[0]);
        assert_eq!(p.long[0].1, 1.0 / sizes[9] as f64);
        assert_eq!(p.short[0].1, -1.0 / sizes[0] as f64);

        let empty = RankedGroups {
            groups: vec![vec![], vec![1]],
            ..g
        };
        assert_eq!(
            build_long_short(&empty, "200", Criterion::MarketCap),
            Err(PortfolioError::EmptyExtremeGroup)
        );
    }

    fn two_day_store(moves: &[f64]) -> PriceStore {
        let d0 = NaiveDate::from_ymd_opt(2021, 1, 4).unwrap();
        let d1 = NaiveDate::from_ymd_opt(2021, 1, 5).unwrap();
        let bar = |date, px: f64| DailyBar {
            date,
            adj_close: px,
            volume: 0,
            shares_outstanding: 1,
            market_cap: px,
        };
        PriceStore::from_bars(moves.iter().enumerate().flat_map(|(i, m)| {
            let id = InstrumentId::new(format!("I{i}")).unwrap();
            [(id.clone(), bar(d0, 100.0)), (id, bar(d1, 100.0 * (1.0 + m)))]
        }))
        .unwrap()
    }

    fn book(long: &[usize], short: &[usize]) -> LongShortPortfolio {
        LongShortPortfolio {
            formation: DayIdx(0),
            date: NaiveDate::from_ymd_opt(2021, 1, 4).unwrap(),
            long: long.iter().map(|&i| (i, 1.0 / long.len() as f64)).collect(),
            short: short.iter().map(|&i| (i, -1.0 / short.len() as f64)).collect(),
            universe_label: "200".into(),
            criterion: Criterion::CumulativeReturn,
        }
    }

    #[test]
    fn raw_return_examples() {
        let store = two_day_store(&[0.10, -0.10]);
        let r = portfolio_return(&book(&[0], &[1]), &store, DayIdx(0), DayIdx(1)).unwrap();
        assert!((r - 0.20).abs() < 1e-12);

        let store = two_day_store(&[0.05, 0.05]);
        assert_eq!(
            portfolio_return(&book(&[0], &[1]), &store, DayIdx(0), DayIdx(1)).unwrap(),
            0.0
        );

        let store = two_day_store(&[0.10, 0.02, -0.03, -0.07]);
        let r = portfolio_return(&book(&[0, 1], &[2, 3]), &store, DayIdx(0), DayIdx(1)).unwrap();
        let by_hand = 0.5 * (0.10 + 0.02) - 0.5 * (-0.03 - 0.07);
        assert!((r - by_hand).abs() < 1e-12);
        assert!((r - 0.11).abs() < 1e-12);
    }

    #[test]
    fn delisted_constituent_goes_to_cash() {
        let d = |i: u32| NaiveDate::from_ymd_opt(2021, 1, i).unwrap();
        let bar = |date, px: f64| DailyBar {
            date,
            adj_close: px,
            volume: 0,
            shares_outstanding: 1,
            market_cap: px,
        };
        let a = InstrumentId::new("A").unwrap();
        let b = InstrumentId::new("B").unwrap();
        let mut rows: Vec<_> = (1..=30).map(|i| (a.clone(), bar(d(i), 10.0))).collect();
        rows.push((b.clone(), bar(d(1), 10.0)));
        rows.push((b.clone(), bar(d(2), 12.0)));
        let store = PriceStore::from_bars(rows).unwrap();
        assert!((holding_return(&store, 1, DayIdx(0), DayIdx(29)).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(step_return(&store, 1, DayIdx(5), DayIdx(29)), 0.0);
        assert!(matches!(
            holding_return(&store, 1, DayIdx(20), DayIdx(29)),
            Err(MarketDataError::StaleData { .. })
        ));
    }

    #[test]
    fn csv_rows() {
        let store = two_day_store(&[0.0, 0.0]);
        let mut buf = Vec::new();
        book(&[0], &[1]).write_csv(&store, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "2021-01-04,long,I0,1\n2021-01-04,short,I1,-1\n"
        );
    }
}
