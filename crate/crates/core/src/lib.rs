//! Cross-sectional momentum backtesting over point-in-time index subuniverses.
//!
//! The crate is organised bottom-up:
//!
//! * [`marketdata`] loads the daily price/volume/flow panel and owns the trading calendar.
//! * [`universe`] holds index membership intervals and evaluates set expressions such as
//!   `200-100+50` against them.
//! * [`criteria`] scores instruments over a lookback window (cumulative return, market cap,
//!   turnover, investor net flow).
//! * [`portfolio`] sorts scores into quantile groups and builds the dollar-neutral long-short book.
//! * [`engine`] runs single backtests, lookback/holding grids and universe comparisons.
//! * [`stats`] turns per-period raw returns into profitability, implemented return and Sharpe.
//! * [`synth`] generates synthetic markets with known ground truth, plus a brute-force oracle.
//!
//! With the default `parallel` feature grid cells are evaluated on a rayon pool; without it the
//! same code paths run sequentially and produce bitwise-identical results.

pub mod criteria;
pub mod engine;
pub mod exec;
pub mod marketdata;
pub mod portfolio;
pub mod stats;
pub mod synth;
pub mod universe;

pub use criteria::{Criterion, FlowGroup, ScoreVector};
pub use engine::{BacktestResult, BacktestSpec, GridResult, OverlapMode};
pub use exec::Execution;
pub use marketdata::{Frequency, InstrumentId, PriceStore};
pub use portfolio::{LongShortPortfolio, RankedGroups};
pub use stats::{BacktestSummary, Grid};
pub use universe::{IndexId, MembershipCalendar, UniverseExpr};
