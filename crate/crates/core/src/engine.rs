//! Backtests over one (lookback, holding) pair, full grids, and universe comparisons.
//!
//! Periods are delimited by the calendar's period marks. A cohort formed at mark `f` ranks
//! on the window `(mark[f-J], mark[f]]`, trades at the close of `mark[f]` and is liquidated
//! at the close of `mark[f+K]`. There is no skip period.
//!
//! Two overlap modes are provided:
//!
//! * **Sequential** (default): one cohort every `K` periods. Each cohort contributes a single
//!   observation `raw_total / K` to the per-period series.
//! * **Composite**: a cohort forms every period and period `p`'s return is the mean of the
//!   period-`p` returns of the (up to) `K` live cohorts, each equal-weighted within its legs.
//!
//! In both modes a round trip costs two baskets, charged as `2c / K` per period.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::criteria::{build_scores, CriteriaError, Criterion};
use crate::exec::Execution;
use crate::marketdata::{DayIdx, Frequency, PriceStore};
use crate::portfolio::{
    build_long_short, group_return, portfolio_return, rank_and_group, step_return, LongShortPortfolio, PortfolioError,
    RankedGroups,
};
use crate::stats::{
    amortized_cost, newey_west_t, relative_grid, summarize, BacktestSummary, Grid, RelativeMetric, StatsError,
};
use crate::universe::{MembershipCalendar, UniverseExpr};

/// Default per-basket transaction cost (35 bps).
pub const DEFAULT_COST_PER_BASKET: f64 = 0.0035;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapMode {
    #[default]
    Sequential,
    Composite,
}

impl fmt::Display for OverlapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OverlapMode::Sequential => "sequential",
            OverlapMode::Composite => "composite",
        })
    }
}

impl FromStr for OverlapMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(OverlapMode::Sequential),
            "composite" => Ok(OverlapMode::Composite),
            other => Err(format!(
                "unknown overlap mode `{other}` (expected sequential|composite)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestSpec {
    pub universe: UniverseExpr,
    pub criterion: Criterion,
    /// Lookback J, in periods.
    pub lookback: usize,
    /// Holding K, in periods.
    pub holding: usize,
    pub frequency: Frequency,
    /// Number of quantile groups G.
    pub groups: usize,
    pub cost_per_basket: f64,
    pub overlap: OverlapMode,
}

impl BacktestSpec {
    /// Monthly, deciles, 35 bps, sequential, J = K = 1.
    pub fn new(universe: UniverseExpr, criterion: Criterion) -> Self {
        Self {
            universe,
            criterion,
            lookback: 1,
            holding: 1,
            frequency: Frequency::Monthly,
            groups: 10,
            cost_per_basket: DEFAULT_COST_PER_BASKET,
            overlap: OverlapMode::Sequential,
        }
    }

    pub fn with_horizon(mut self, lookback: usize, holding: usize) -> Self {
        self.lookback = lookback;
        self.holding = holding;
        self
    }

    pub fn universe_label(&self) -> String {
        self.universe.to_string()
    }

    fn validate(&self) -> Result<(), EngineError> {
        if self.lookback == 0 || self.holding == 0 {
            return Err(EngineError::InvalidSpec(
                "lookback and holding must be at least 1".into(),
            ));
        }
        if self.groups < 2 {
            return Err(EngineError::InvalidSpec(format!(
                "group count must be at least 2, got {}",
                self.groups
            )));
        }
        if self.cost_per_basket < 0.0 || !self.cost_per_basket.is_finite() {
            return Err(EngineError::InvalidSpec(format!(
                "cost must be a non-negative number, got {}",
                self.cost_per_basket
            )));
        }
        Ok(())
    }

    /// Per-period cost charged in the summary.
    pub fn cost_per_period(&self) -> f64 {
        amortized_cost(self.cost_per_basket, self.holding)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortRecord {
    pub formation: DayIdx,
    pub formation_date: NaiveDate,
    /// `formation + K` marks; composite cohorts cut off by the end of data stop at the last mark.
    pub liquidation: DayIdx,
    pub liquidation_date: NaiveDate,
    /// Sequential: buy-and-hold long-short return over the holding period.
    /// Composite: sum of the cohort's per-period returns.
    pub raw_return_total: f64,
    pub portfolio: LongShortPortfolio,
    /// Universe members dropped for insufficient data at formation.
    pub ineligible: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodReturn {
    pub date: NaiveDate,
    pub raw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedFormation {
    pub date: NaiveDate,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub spec: BacktestSpec,
    pub series: Vec<PeriodReturn>,
    pub cohorts: Vec<CohortRecord>,
    pub skipped: Vec<SkippedFormation>,
    pub summary: BacktestSummary,
}

impl BacktestResult {
    pub fn raw_series(&self) -> Vec<f64> {
        self.series.iter().map(|p| p.raw).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid backtest spec: {0}")]
    InvalidSpec(String),
    #[error("insufficient history: {marks} period marks, need more than lookback {lookback} + holding {holding}")]
    InsufficientHistory {
        marks: usize,
        lookback: usize,
        holding: usize,
    },
    #[error("universe {universe} has fewer than {groups} eligible names at every formation date")]
    EmptyUniverse { universe: String, groups: usize },
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Ranked groups at one formation mark, or the reason it was skipped.
fn form(
    spec: &BacktestSpec,
    store: &PriceStore,
    membership: &MembershipCalendar,
    period: usize,
) -> Result<Result<(RankedGroups, usize), SkippedFormation>, EngineError> {
    let date = store.calendar().date(store.calendar().marks(spec.frequency)[period]);
    let scores = match build_scores(
        store,
        membership,
        &spec.universe,
        spec.criterion,
        spec.frequency,
        period,
        spec.lookback,
    ) {
        Ok(s) => s,
        Err(CriteriaError::EmptyUniverse { .. }) => {
            return Ok(Err(SkippedFormation {
                date,
                reason: "no eligible members".into(),
            }))
        }
        Err(e) => return Err(e.into()),
    };
    if scores.entries.len() < spec.groups {
        return Ok(Err(SkippedFormation {
            date,
            reason: format!(
                "{} eligible members, fewer than {} groups",
                scores.entries.len(),
                spec.groups
            ),
        }));
    }
    let groups = rank_and_group(&scores, spec.groups)?;
    Ok(Ok((groups, scores.ineligible)))
}

/// Formation marks used by sequential mode.
fn sequential_formations(marks: usize, lookback: usize, holding: usize) -> impl Iterator<Item = usize> {
    (lookback..marks)
        .step_by(holding)
        .take_while(move |f| f + holding < marks)
}

pub fn run_backtest(
    spec: &BacktestSpec,
    store: &PriceStore,
    membership: &MembershipCalendar,
) -> Result<BacktestResult, EngineError> {
    spec.validate()?;
    let marks = store.calendar().marks(spec.frequency);
    if spec.lookback + spec.holding >= marks.len() {
        return Err(EngineError::InsufficientHistory {
            marks: marks.len(),
            lookback: spec.lookback,
            holding: spec.holding,
        });
    }
    let (series, cohorts, skipped) = match spec.overlap {
        OverlapMode::Sequential => run_sequential(spec, store, membership)?,
        OverlapMode::Composite => run_composite(spec, store, membership)?,
    };
    for s in &skipped {
        log::warn!(
            "{} {}: skipped formation on {}: {}",
            spec.universe_label(),
            spec.criterion,
            s.date,
            s.reason
        );
    }
    if cohorts.is_empty() {
        return Err(EngineError::EmptyUniverse {
            universe: spec.universe_label(),
            groups: spec.groups,
        });
    }
    let raws: Vec<f64> = series.iter().map(|p| p.raw).collect();
    let mut summary = summarize(&raws, spec.cost_per_period())?;
    if spec.overlap == OverlapMode::Composite {
        summary.newey_west_t = newey_west_t(&raws, spec.holding - 1);
    }
    Ok(BacktestResult {
        spec: spec.clone(),
        series,
        cohorts,
        skipped,
        summary,
    })
}

type Run = (Vec<PeriodReturn>, Vec<CohortRecord>, Vec<SkippedFormation>);

fn run_sequential(
    spec: &BacktestSpec,
    store: &PriceStore,
    membership: &MembershipCalendar,
) -> Result<Run, EngineError> {
    let cal = store.calendar();
    let marks = cal.marks(spec.frequency);
    let label = spec.universe_label();
    let mut series = Vec::new();
    let mut cohorts = Vec::new();
    let mut skipped = Vec::new();
    for f in sequential_formations(marks.len(), spec.lookback, spec.holding) {
        let (groups, ineligible) = match form(spec, store, membership, f)? {
            Ok(g) => g,
            Err(s) => {
                skipped.push(s);
                continue;
            }
        };
        let portfolio = build_long_short(&groups, &label, spec.criterion)?;
        let (t0, t1) = (marks[f], marks[f + spec.holding]);
        let raw = portfolio_return(&portfolio, store, t0, t1)?;
        series.push(PeriodReturn {
            date: cal.date(t1),
            raw: raw / spec.holding as f64,
        });
        cohorts.push(CohortRecord {
            formation: t0,
            formation_date: cal.date(t0),
            liquidation: t1,
            liquidation_date: cal.date(t1),
            raw_return_total: raw,
            portfolio,
            ineligible,
        });
    }
    Ok((series, cohorts, skipped))
}

fn run_composite(spec: &BacktestSpec, store: &PriceStore, membership: &MembershipCalendar) -> Result<Run, EngineError> {
    let cal = store.calendar();
    let marks = cal.marks(spec.frequency);
    let last = marks.len() - 1;
    let label = spec.universe_label();
    let k = spec.holding;

    // Cohorts live over periods f+1 ..= min(f+K, last).
    let mut live: Vec<Option<(usize, LongShortPortfolio, usize)>> = Vec::new();
    let mut skipped = Vec::new();
    for f in spec.lookback..last {
        match form(spec, store, membership, f)? {
            Ok((groups, ineligible)) => {
                live.push(Some((
                    f,
                    build_long_short(&groups, &label, spec.criterion)?,
                    ineligible,
                )));
            }
            Err(s) => {
                skipped.push(s);
                live.push(None);
            }
        }
    }
    let mut totals = vec![0.0; live.len()];
    let mut series = Vec::new();
    for p in spec.lookback + k..=last {
        let mut sum = 0.0;
        let mut active = 0usize;
        for f in p - k..p {
            let slot = f - spec.lookback;
            if let Some((_, portfolio, _)) = &live[slot] {
                let r: f64 = portfolio
                    .positions()
                    .map(|(inst, w)| w * step_return(store, inst, marks[p - 1], marks[p]))
                    .sum();
                totals[slot] += r;
                sum += r;
                active += 1;
            }
        }
        if active > 0 {
            series.push(PeriodReturn {
                date: cal.date(marks[p]),
                raw: sum / active as f64,
            });
        }
    }
    // Periods before the first full window still accrue to their cohorts' totals.
    for (slot, entry) in live.iter().enumerate() {
        if let Some((f, portfolio, _)) = entry {
            for p in f + 1..(spec.lookback + k).min(f + k + 1).min(last + 1) {
                totals[slot] += portfolio
                    .positions()
                    .map(|(inst, w)| w * step_return(store, inst, marks[p - 1], marks[p]))
                    .sum::<f64>();
            }
        }
    }
    let cohorts = live
        .into_iter()
        .zip(totals)
        .filter_map(|(entry, total)| {
            entry.map(|(f, portfolio, ineligible)| {
                let end = (f + k).min(last);
                CohortRecord {
                    formation: marks[f],
                    formation_date: cal.date(marks[f]),
                    liquidation: marks[end],
                    liquidation_date: cal.date(marks[end]),
                    raw_return_total: total,
                    portfolio,
                    ineligible,
                }
            })
        })
        .collect();
    Ok((series, cohorts, skipped))
}

/// Lookback × holding table of summaries; failed cells keep their error.
pub type GridResult = Grid<Result<BacktestSummary, EngineError>>;

/// Runs every (J, K) cell independently. Cell order and values do not depend on `exec`.
pub fn run_grid(
    base: &BacktestSpec,
    lookbacks: &[usize],
    holdings: &[usize],
    store: &PriceStore,
    membership: &MembershipCalendar,
    exec: Execution,
) -> GridResult {
    let coords: Vec<(usize, usize)> = lookbacks
        .iter()
        .flat_map(|&j| holdings.iter().map(move |&k| (j, k)))
        .collect();
    let cells = exec.map(coords, |(j, k)| {
        let spec = base.clone().with_horizon(j, k);
        run_backtest(&spec, store, membership).map(|r| r.summary)
    });
    Grid {
        lookbacks: lookbacks.to_vec(),
        holdings: holdings.to_vec(),
        cells,
    }
}

#[derive(Debug, Clone)]
pub struct UniverseGrid {
    pub universe: UniverseExpr,
    pub grid: GridResult,
}

#[derive(Debug, Clone)]
pub struct RelativeGrids {
    pub universe: UniverseExpr,
    /// `r_I(sub) - r_I(baseline)` per cell.
    pub relative_return: Grid<Option<f64>>,
    /// `SR(sub) - SR(baseline)` per cell.
    pub relative_sharpe: Grid<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct UniverseComparison {
    pub baseline: UniverseGrid,
    pub universes: Vec<UniverseGrid>,
    pub relative: Vec<RelativeGrids>,
}

/// Grids for a baseline universe and each comparison universe, plus relative grids of every
/// comparison universe against the baseline.
#[allow(clippy::too_many_arguments)]
pub fn run_universe_comparison(
    base: &BacktestSpec,
    baseline: &UniverseExpr,
    universes: &[UniverseExpr],
    lookbacks: &[usize],
    holdings: &[usize],
    store: &PriceStore,
    membership: &MembershipCalendar,
    exec: Execution,
) -> UniverseComparison {
    let all: Vec<&UniverseExpr> = std::iter::once(baseline).chain(universes).collect();
    let work: Vec<(usize, usize, usize)> = (0..all.len())
        .flat_map(|u| {
            lookbacks
                .iter()
                .flat_map(move |&j| holdings.iter().map(move |&k| (u, j, k)))
        })
        .collect();
    let mut cells = exec
        .map(work, |(u, j, k)| {
            let mut spec = base.clone().with_horizon(j, k);
            spec.universe = all[u].clone();
            run_backtest(&spec, store, membership).map(|r| r.summary)
        })
        .into_iter();
    let per = lookbacks.len() * holdings.len();
    let mut grids: Vec<UniverseGrid> = all
        .iter()
        .map(|u| UniverseGrid {
            universe: (*u).clone(),
            grid: Grid {
                lookbacks: lookbacks.to_vec(),
                holdings: holdings.to_vec(),
                cells: cells.by_ref().take(per).collect(),
            },
        })
        .collect();
    let baseline = grids.remove(0);
    let relative = grids
        .iter()
        .map(|g| RelativeGrids {
            universe: g.universe.clone(),
            relative_return: relative_grid(&g.grid, &baseline.grid, RelativeMetric::Return).expect("same shape"),
            relative_sharpe: relative_grid(&g.grid, &baseline.grid, RelativeMetric::Sharpe).expect("same shape"),
        })
        .collect();
    UniverseComparison {
        baseline,
        universes: grids,
        relative,
    }
}

/// Mean per-period raw return of each ranked group held long on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupReturns {
    pub holding: usize,
    /// Index 0 is the lowest-score group.
    pub mean_per_period: Vec<f64>,
    pub cohorts: usize,
}

impl GroupReturns {
    /// 1-based label of the best group.
    pub fn best_group(&self) -> usize {
        let mut best = 0;
        for (g, r) in self.mean_per_period.iter().enumerate() {
            if *r > self.mean_per_period[best] {
                best = g;
            }
        }
        best + 1
    }
}

/// Equal-weighted long-only returns of every group on the sequential formation schedule
/// (group 1 = lowest score). With the `size` criterion this is the size-group table.
pub fn run_group_returns(
    spec: &BacktestSpec,
    store: &PriceStore,
    membership: &MembershipCalendar,
) -> Result<GroupReturns, EngineError> {
    spec.validate()?;
    let marks = store.calendar().marks(spec.frequency);
    if spec.lookback + spec.holding >= marks.len() {
        return Err(EngineError::InsufficientHistory {
            marks: marks.len(),
            lookback: spec.lookback,
            holding: spec.holding,
        });
    }
    let mut sums = vec![0.0; spec.groups];
    let mut cohorts = 0usize;
    for f in sequential_formations(marks.len(), spec.lookback, spec.holding) {
        let Ok((groups, _)) = form(spec, store, membership, f)? else {
            continue;
        };
        let (t0, t1) = (marks[f], marks[f + spec.holding]);
        for (g, members) in groups.groups.iter().enumerate() {
            sums[g] += group_return(store, members, t0, t1)? / spec.holding as f64;
        }
        cohorts += 1;
    }
    if cohorts == 0 {
        return Err(EngineError::EmptyUniverse {
            universe: spec.universe_label(),
            groups: spec.groups,
        });
    }
    Ok(GroupReturns {
        holding: spec.holding,
        mean_per_period: sums.iter().map(|s| s / cohorts as f64).collect(),
        cohorts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::{DailyBar, InstrumentId};
    use crate::universe::{parse_universe, IndexId, MembershipInterval, OPEN_END};

    /// One bar per month-end, so every trading day is a period mark.
    fn monthly_store(paths: &[Vec<f64>]) -> (PriceStore, MembershipCalendar) {
        let date = |m: usize| {
            NaiveDate::from_ymd_opt(2000 + (m / 12) as i32, (m % 12) as u32 + 1, 1)
                .unwrap()
                .checked_add_months(chrono::Months::new(1))
                .unwrap()
                .pred_opt()
                .unwrap()
        };
        let mut rows = Vec::new();
        for (i, path) in paths.iter().enumerate() {
            let id = InstrumentId::new(format!("S{i:02}")).unwrap();
            for (m, px) in path.iter().enumerate() {
                rows.push((
                    id.clone(),
                    DailyBar {
                        date: date(m),
                        adj_close: *px,
                        volume: 10,
                        shares_outstanding: 100,
                        market_cap: px * 100.0,
                    },
                ));
            }
        }
        let store = PriceStore::from_bars(rows).unwrap();
        let cal = MembershipCalendar::from_intervals(
            store.instruments().iter().map(|id| MembershipInterval {
                index: IndexId::T,
                instrument: id.clone(),
                start: date(0),
                end: OPEN_END,
            }),
            &store,
        )
        .unwrap();
        (store, cal)
    }

    fn compound(steps: &[f64]) -> Vec<f64> {
        let mut px = vec![100.0];
        for s in steps {
            px.push(px.last().unwrap() * (1.0 + s));
        }
        px
    }

    fn spec(j: usize, k: usize, groups: usize) -> BacktestSpec {
        let mut s = BacktestSpec::new(parse_universe("200").unwrap(), Criterion::CumulativeReturn).with_horizon(j, k);
        s.groups = groups;
        s
    }

    #[test]
    fn persistent_market_hand_replay() {
        // Two winners +10% every period, two losers -10%.
        let w = compound(&[0.1, 0.1, 0.1]);
        let l = compound(&[-0.1, -0.1, -0.1]);
        let (store, cal) = monthly_store(&[w.clone(), w, l.clone(), l]);
        let res = run_backtest(&spec(1, 1, 2), &store, &cal).unwrap();
        assert_eq!(res.cohorts.len(), 2);
        for c in &res.cohorts {
            assert!((c.raw_return_total - 0.20).abs() < 1e-12);
            assert_eq!(c.portfolio.long.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 1]);
        }
        assert_eq!(res.summary.profitability, 1);
        assert!(res.summary.flags.zero_volatility);
    }

    #[test]
    fn common_path_is_neutral() {
        let p = compound(&[0.05, -0.02, 0.03, 0.01, -0.04]);
        let (store, cal) = monthly_store(&vec![p; 4]);
        let mut s = spec(1, 1, 2);
        s.cost_per_basket = 0.0035;
        let res = run_backtest(&s, &store, &cal).unwrap();
        assert!(res.cohorts.iter().all(|c| c.raw_return_total == 0.0));
        assert!((res.summary.implemented_return + 0.007).abs() < 1e-15);
    }

    #[test]
    fn insufficient_history_and_bad_spec() {
        let p = compound(&[0.01, 0.02]);
        let (store, cal) = monthly_store(&[p.clone(), p]);
        assert!(matches!(
            run_backtest(&spec(2, 1, 2), &store, &cal),
            Err(EngineError::InsufficientHistory { .. })
        ));
        assert!(matches!(
            run_backtest(&spec(0, 1, 2), &store, &cal),
            Err(EngineError::InvalidSpec(_))
        ));
        assert!(matches!(
            run_backtest(&spec(1, 1, 1), &store, &cal),
            Err(EngineError::InvalidSpec(_))
        ));
    }

    #[test]
    fn too_few_names_everywhere_is_an_error() {
        let p = compound(&[0.01, 0.02, 0.01, 0.0]);
        let (store, cal) = monthly_store(&[p.clone(), p]);
        assert!(matches!(
            run_backtest(&spec(1, 1, 3), &store, &cal),
            Err(EngineError::EmptyUniverse { .. })
        ));
        let mut s = spec(1, 1, 2);
        s.universe = parse_universe("50").unwrap();
        assert!(matches!(
            run_backtest(&s, &store, &cal),
            Err(EngineError::EmptyUniverse { .. })
        ));
    }

    fn noisy_paths(n: usize, periods: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut state = seed;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.2
        };
        (0..n)
            .map(|_| compound(&(0..periods).map(|_| next()).collect::<Vec<_>>()))
            .collect()
    }

    #[test]
    fn sequential_cohort_accounting() {
        let (store, cal) = monthly_store(&noisy_paths(12, 30, 7));
        let res = run_backtest(&spec(3, 4, 3), &store, &cal).unwrap();
        assert_eq!(res.series.len(), res.cohorts.len());
        // 31 marks: formations 3, 7, ..., 23, 27 would need mark 31.
        assert_eq!(res.cohorts.len(), 6);
        for (p, c) in res.series.iter().zip(&res.cohorts) {
            assert!((p.raw * 4.0 - c.raw_return_total).abs() < 1e-12);
            assert_eq!(p.date, c.liquidation_date);
        }
        assert!(res.series.windows(2).all(|w| w[0].date < w[1].date));
    }

    #[test]
    fn cost_does_not_touch_raw_returns() {
        let (store, cal) = monthly_store(&noisy_paths(12, 30, 11));
        let mut a = spec(2, 3, 4);
        a.cost_per_basket = 0.0;
        let mut b = a.clone();
        b.cost_per_basket = 0.01;
        let ra = run_backtest(&a, &store, &cal).unwrap();
        let rb = run_backtest(&b, &store, &cal).unwrap();
        assert_eq!(ra.series, rb.series);
        assert_eq!(
            ra.summary.implemented_return - rb.summary.implemented_return,
            2.0 * 0.01 / 3.0
        );
    }

    #[test]
    fn composite_averages_live_cohorts() {
        let (store, cal) = monthly_store(&noisy_paths(8, 20, 3));
        let mut s = spec(2, 3, 2);
        s.overlap = OverlapMode::Composite;
        let res = run_backtest(&s, &store, &cal).unwrap();
        // Periods 5..=20.
        assert_eq!(res.series.len(), 16);
        assert!(res.summary.newey_west_t.is_some());
        // Replay period 5 by hand: cohorts formed at marks 2, 3, 4.
        let marks = store.calendar().marks(Frequency::Monthly);
        let mut sum = 0.0;
        for c in &res.cohorts[0..3] {
            sum += c
                .portfolio
                .positions()
                .map(|(i, w)| w * store.period_return(i, marks[4], marks[5]).unwrap())
                .sum::<f64>();
        }
        assert!((res.series[0].raw - sum / 3.0).abs() < 1e-12);
        // With K = 1 composite and sequential coincide.
        let mut one = spec(2, 1, 2);
        let seq = run_backtest(&one, &store, &cal).unwrap();
        one.overlap = OverlapMode::Composite;
        let comp = run_backtest(&one, &store, &cal).unwrap();
        assert_eq!(seq.series.len(), comp.series.len());
        for (a, b) in seq.series.iter().zip(&comp.series) {
            assert!((a.raw - b.raw).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_single_cell_matches_backtest() {
        let (store, cal) = monthly_store(&noisy_paths(10, 24, 5));
        let base = spec(1, 1, 5);
        let grid = run_grid(&base, &[2], &[3], &store, &cal, Execution::Serial);
        assert_eq!(grid.len(), 1);
        let direct = run_backtest(&base.clone().with_horizon(2, 3), &store, &cal).unwrap();
        assert_eq!(grid.cells[0].as_ref().unwrap(), &direct.summary);
    }

    #[test]
    fn grid_records_cell_errors() {
        let (store, cal) = monthly_store(&noisy_paths(10, 10, 5));
        let grid = run_grid(&spec(1, 1, 5), &[1, 8], &[1, 5], &store, &cal, Execution::Parallel);
        assert_eq!(grid.len(), 4);
        assert!(grid.get(1, 1).unwrap().is_ok());
        assert!(matches!(
            grid.get(8, 5).unwrap(),
            Err(EngineError::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn identical_universe_comparison_is_zero() {
        let (store, cal) = monthly_store(&noisy_paths(10, 24, 9));
        let t = parse_universe("200").unwrap();
        let cmp = run_universe_comparison(
            &spec(1, 1, 5),
            &t,
            std::slice::from_ref(&t),
            &[1, 2],
            &[1, 2],
            &store,
            &cal,
            Execution::Serial,
        );
        assert_eq!(cmp.relative.len(), 1);
        assert!(cmp.relative[0].relative_return.cells.iter().all(|c| *c == Some(0.0)));
        assert!(cmp.relative[0].relative_sharpe.cells.iter().all(|c| *c == Some(0.0)));
    }

    #[test]
    fn group_returns_by_size() {
        // Bigger instruments (higher prices, same share count) grow faster.
        let paths: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                compound(&[0.01 * i as f64; 12])
                    .iter()
                    .map(|p| p * (1.0 + i as f64))
                    .collect()
            })
            .collect();
        let (store, cal) = monthly_store(&paths);
        let mut s = spec(1, 2, 3);
        s.criterion = Criterion::MarketCap;
        let g = run_group_returns(&s, &store, &cal).unwrap();
        assert_eq!(g.mean_per_period.len(), 3);
        assert_eq!(g.best_group(), 3);
        assert!(g.mean_per_period[0] < g.mean_per_period[1]);
    }
}
