//! Summary statistics of a per-period raw return series.
//!
//! For a raw mean `r` and per-period cost `c`:
//!
//! * profitability `PF = r / |r|` (`+1` momentum, `-1` contrarian),
//! * implemented return `r_I = |r| - c`,
//! * Sharpe ratio `SR = r_I / σ` with `σ` the sample standard deviation of the raw series.
//!
//! Round-trip cost is two baskets per cohort, amortised over the holding period.

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("series has {0} observations, need at least 2")]
    SeriesTooShort(usize),
    #[error("grid shapes differ")]
    ShapeMismatch,
}

/// Conditions that make a statistic conventional rather than computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SummaryFlags {
    /// Mean raw return is exactly zero; PF was set to +1 by convention.
    pub zero_mean: bool,
    /// Sample standard deviation is zero; Sharpe and t are undefined.
    pub zero_volatility: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestSummary {
    /// Arithmetic mean raw return per period.
    pub mean_raw: f64,
    /// Sample (n-1) standard deviation of per-period raw returns.
    pub volatility: f64,
    pub profitability: i8,
    pub implemented_return: f64,
    pub sharpe: Option<f64>,
    /// Plain one-sample t of the raw mean.
    pub t_stat: Option<f64>,
    /// Two-sided rejection of a zero mean at 95%.
    pub reject_zero_mean: bool,
    /// Newey-West t, reported for overlapping (composite) series only.
    pub newey_west_t: Option<f64>,
    pub n_periods: usize,
    /// Per-period cost subtracted in `implemented_return`.
    pub cost_per_period: f64,
    pub flags: SummaryFlags,
}

/// Per-period cost of one round trip (two baskets) spread over `holding` periods.
pub fn amortized_cost(cost_per_basket: f64, holding: usize) -> f64 {
    2.0 * cost_per_basket / holding as f64
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64], m: f64) -> f64 {
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

pub fn summarize(series: &[f64], cost_per_period: f64) -> Result<BacktestSummary, StatsError> {
    let test = t_test_zero_mean(series)?;
    let r = mean(series);
    let sigma = sample_sd(series, r);
    let profitability = if r < 0.0 { -1 } else { 1 };
    let implemented_return = r.abs() - cost_per_period;
    let sharpe = (sigma > 0.0).then(|| implemented_return / sigma);
    Ok(BacktestSummary {
        mean_raw: r,
        volatility: sigma,
        profitability,
        implemented_return,
        sharpe,
        t_stat: test.t,
        reject_zero_mean: test.reject_at_95,
        newey_west_t: None,
        n_periods: series.len(),
        cost_per_period,
        flags: SummaryFlags {
            zero_mean: r == 0.0,
            zero_volatility: test.zero_volatility,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: Option<f64>,
    pub degrees_of_freedom: usize,
    pub reject_at_95: bool,
    pub zero_volatility: bool,
}

/// Two-sided 97.5% Student-t quantile.
pub fn t_critical_975(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// One-sample two-sided t-test of a zero mean. With zero variance the test rejects iff the
/// (constant) mean is non-zero.
pub fn t_test_zero_mean(series: &[f64]) -> Result<TTest, StatsError> {
    let n = series.len();
    if n < 2 {
        return Err(StatsError::SeriesTooShort(n));
    }
    let m = mean(series);
    let sd = sample_sd(series, m);
    let df = n - 1;
    if sd == 0.0 {
        return Ok(TTest {
            t: None,
            degrees_of_freedom: df,
            reject_at_95: m != 0.0,
            zero_volatility: true,
        });
    }
    let t = m / (sd / (n as f64).sqrt());
    Ok(TTest {
        t: Some(t),
        degrees_of_freedom: df,
        reject_at_95: t.abs() > t_critical_975(df),
        zero_volatility: false,
    })
}

/// t statistic of the mean with a Bartlett-kernel Newey-West variance of the given lag.
pub fn newey_west_t(series: &[f64], lag: usize) -> Option<f64> {
    let n = series.len();
    if n < 2 {
        return None;
    }
    let m = mean(series);
    let dev: Vec<f64> = series.iter().map(|x| x - m).collect();
    let gamma = |l: usize| dev[l..].iter().zip(&dev).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let mut var = gamma(0);
    for l in 1..=lag.min(n - 1) {
        var += 2.0 * (1.0 - l as f64 / (lag as f64 + 1.0)) * gamma(l);
    }
    (var > 0.0).then(|| m / (var / n as f64).sqrt())
}

/// Lookback × holding table, stored row-major (lookback outer).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub lookbacks: Vec<usize>,
    pub holdings: Vec<usize>,
    pub cells: Vec<T>,
}

impl<T> Grid<T> {
    pub fn from_fn(lookbacks: Vec<usize>, holdings: Vec<usize>, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let cells = lookbacks
            .iter()
            .flat_map(|&j| holdings.iter().map(move |&k| (j, k)))
            .map(|(j, k)| f(j, k))
            .collect();
        Self {
            lookbacks,
            holdings,
            cells,
        }
    }

    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.lookbacks
            .iter()
            .flat_map(move |&j| self.holdings.iter().map(move |&k| (j, k)))
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &T)> + '_ {
        self.coords().zip(self.cells.iter())
    }

    pub fn get(&self, lookback: usize, holding: usize) -> Option<&T> {
        let r = self.lookbacks.iter().position(|&j| j == lookback)?;
        let c = self.holdings.iter().position(|&k| k == holding)?;
        self.cells.get(r * self.holdings.len() + c)
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            lookbacks: self.lookbacks.clone(),
            holdings: self.holdings.clone(),
            cells: self.cells.iter().map(f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelativeMetric {
    Return,
    Sharpe,
}

/// Cellwise `metric(sub) - metric(base)`; failed cells and undefined Sharpe ratios are `None`.
pub fn relative_grid<E>(
    sub: &Grid<Result<BacktestSummary, E>>,
    base: &Grid<Result<BacktestSummary, E>>,
    metric: RelativeMetric,
) -> Result<Grid<Option<f64>>, StatsError> {
    if sub.lookbacks != base.lookbacks || sub.holdings != base.holdings {
        return Err(StatsError::ShapeMismatch);
    }
    let value = |s: &BacktestSummary| match metric {
        RelativeMetric::Return => Some(s.implemented_return),
        RelativeMetric::Sharpe => s.sharpe,
    };
    let cells = sub
        .cells
        .iter()
        .zip(&base.cells)
        .map(|(a, b)| match (a, b) {
            (Ok(a), Ok(b)) => Some(value(a)? - value(b)?),
            _ => None,
        })
        .collect();
    Ok(Grid {
        lookbacks: sub.lookbacks.clone(),
        holdings: sub.holdings.clone(),
        cells,
    })
}
