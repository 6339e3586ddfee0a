//! Command implementations behind the `momlab` binary.
//!
//! Every command validates its configuration, loads data, delegates all computation to
//! `momlab-core`, then writes its outputs (each file atomically) together with a
//! `manifest.json` describing the run.

pub mod report;
pub mod svg;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use momlab_core::engine::{
    run_backtest, run_grid, run_group_returns, run_universe_comparison, EngineError, GridResult, OverlapMode,
};
use momlab_core::marketdata::{load_flows, load_prices, MarketDataError};
use momlab_core::stats::Grid;
use momlab_core::synth::{generate_market, MomentumCarrier, SynthError, SynthParams};
use momlab_core::universe::{load_membership, parse_universe, UniverseError, STANDARD_UNIVERSES};
use momlab_core::{BacktestSpec, Criterion, Execution, Frequency, MembershipCalendar, PriceStore, UniverseExpr};

use report::write_atomic;
use svg::{ColorScale, Heatmap};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<MarketDataError> for CliError {
    fn from(e: MarketDataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<UniverseError> for CliError {
    fn from(e: UniverseError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::InvalidSpec(m) => CliError::Config(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidParams(m) => CliError::Config(m),
            SynthError::Io { .. } => CliError::Internal(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Inclusive range of horizons, written `A..B` (or a single `N`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HorizonRange(pub Vec<usize>);

impl FromStr for HorizonRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad range `{s}` (expected N or A..B with 1 <= A <= B)");
        let (a, b) = match s.split_once("..") {
            Some((a, b)) => (a, b.trim_start_matches('=')),
            None => (s, s),
        };
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a == 0 || a > b {
            return Err(bad());
        }
        Ok(HorizonRange((a..=b).collect()))
    }
}

impl fmt::Display for HorizonRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.0.first(), self.0.last()) {
            (Some(a), Some(b)) => write!(f, "{a}..{b}"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "momlab", version, about = "Momentum backtests over index subuniverses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One (lookback, holding) backtest: summary.csv, series.csv, cohorts.csv, portfolios.csv.
    Backtest(BacktestArgs),
    /// Lookback × holding sweep: grid.csv, grid_errors.csv and four SVG heatmaps.
    Grid(GridArgs),
    /// Grids for several universes and their differences against a baseline.
    Compare(CompareArgs),
    /// Long-only returns of every ranked group across holding periods.
    Groups(GroupsArgs),
    /// Writes a synthetic market (prices.csv, flows.csv, membership.csv).
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub prices: PathBuf,
    /// Required for flow criteria.
    #[arg(long)]
    pub flows: Option<PathBuf>,
    #[arg(long)]
    pub membership: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct StrategyArgs {
    #[arg(long, default_value = "monthly")]
    pub frequency: Frequency,
    /// momentum, size, liquidity, flow:individual, flow:institutional or flow:foreign.
    #[arg(long, default_value = "momentum")]
    pub criterion: Criterion,
    #[arg(long, default_value_t = 10)]
    pub groups: usize,
    /// Cost per basket in basis points.
    #[arg(long, default_value_t = 35.0)]
    pub cost_bps: f64,
    #[arg(long, default_value = "sequential")]
    pub overlap: OverlapMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[arg(long, default_value = "200")]
    pub universe: String,
    #[arg(long)]
    pub lookback: usize,
    #[arg(long)]
    pub holding: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[arg(long, default_value = "200")]
    pub universe: String,
    #[arg(long, default_value = "1..12")]
    pub lookback: HorizonRange,
    #[arg(long, default_value = "1..12")]
    pub holding: HorizonRange,
    /// Also write one lookback × holding matrix CSV per metric.
    #[arg(long)]
    pub matrix: bool,
    /// Return heatmap legend bound (default 0.025 monthly, 0.005 weekly).
    #[arg(long)]
    pub return_bound: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    /// Baseline universe; defaults to the first `--universe`.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Universes to compare (repeatable). Without any, the six subuniverses of `200`.
    #[arg(long)]
    pub universe: Vec<String>,
    #[arg(long, default_value = "1..12")]
    pub lookback: HorizonRange,
    #[arg(long, default_value = "1..12")]
    pub holding: HorizonRange,
    #[arg(long)]
    pub return_bound: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct GroupsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "monthly")]
    pub frequency: Frequency,
    #[arg(long, default_value = "size")]
    pub criterion: Criterion,
    #[arg(long, default_value_t = 10)]
    pub groups: usize,
    #[arg(long, default_value = "200")]
    pub universe: String,
    #[arg(long, default_value_t = 1)]
    pub lookback: usize,
    #[arg(long, default_value = "1..12")]
    pub holding: HorizonRange,
    #[arg(long)]
    pub return_bound: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Persistent drift in every instrument.
    Momentum,
    /// No persistence.
    Null,
    /// Persistence and a premium in cap ranks 51-100.
    Midcap,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "momentum")]
    pub preset: Preset,
    #[arg(long)]
    pub instruments: Option<usize>,
    #[arg(long)]
    pub years: Option<usize>,
    /// Momentum strength phi in [-1, 1].
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    /// `all` or a 1-based cap rank range such as `51-100`.
    #[arg(long)]
    pub carrier: Option<MomentumCarrier>,
    #[arg(long, allow_hyphen_values = true)]
    pub premium: Option<f64>,
    #[arg(long)]
    pub drift_vol: Option<f64>,
    #[arg(long)]
    pub vol_daily: Option<f64>,
    #[arg(long)]
    pub gap_fraction: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

impl SynthArgs {
    pub fn params(&self) -> SynthParams {
        let mut p = match self.preset {
            Preset::Momentum => SynthParams::momentum_market(self.seed),
            Preset::Null => SynthParams::null_market(self.seed),
            Preset::Midcap => SynthParams::midcap_carrier_market(self.seed),
        };
        if let Some(v) = self.instruments {
            p.n_instruments = v;
            // Smaller markets keep the 1:2:4 index proportions.
            if p.index_sizes.1 > v {
                p.index_sizes = ((v / 4).max(1), (v / 2).max(1));
            }
        }
        if let Some(v) = self.years {
            p.n_years = v;
        }
        if let Some(v) = self.phi {
            p.momentum_strength = v;
        }
        if let Some(v) = self.carrier {
            p.momentum_carrier = v;
        }
        if let Some(v) = self.premium {
            p.carrier_premium = v;
        }
        if let Some(v) = self.drift_vol {
            p.drift_vol = v;
        }
        if let Some(v) = self.vol_daily {
            p.vol_daily = v;
        }
        if let Some(v) = self.gap_fraction {
            p.gap_fraction = v;
        }
        p
    }
}

/// Resolved configuration, echoed into `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub prices: Option<PathBuf>,
    pub flows: Option<PathBuf>,
    pub membership: Option<PathBuf>,
    pub frequency: Option<Frequency>,
    /// Baseline first for `compare`.
    pub universes: Vec<String>,
    pub criterion: Option<String>,
    pub lookbacks: Vec<usize>,
    pub holdings: Vec<usize>,
    pub groups: Option<usize>,
    pub cost_per_basket: Option<f64>,
    pub overlap: Option<OverlapMode>,
    pub out: PathBuf,
    pub matrix: bool,
    pub return_bound: Option<f64>,
    pub seed: Option<u64>,
    pub synth: Option<SynthParams>,
}

impl RunConfig {
    fn new(command: &'static str, out: &Path) -> Self {
        Self {
            tool: "momlab",
            version: env!("CARGO_PKG_VERSION"),
            command,
            prices: None,
            flows: None,
            membership: None,
            frequency: None,
            universes: Vec::new(),
            criterion: None,
            lookbacks: Vec::new(),
            holdings: Vec::new(),
            groups: None,
            cost_per_basket: None,
            overlap: None,
            out: out.to_path_buf(),
            matrix: false,
            return_bound: None,
            seed: None,
            synth: None,
        }
    }

    fn with_data(mut self, d: &DataArgs) -> Self {
        self.prices = Some(d.prices.clone());
        self.flows = d.flows.clone();
        self.membership = Some(d.membership.clone());
        self
    }

    fn with_strategy(mut self, s: &StrategyArgs) -> Self {
        self.frequency = Some(s.frequency);
        self.criterion = Some(s.criterion.to_string());
        self.groups = Some(s.groups);
        self.cost_per_basket = Some(s.cost_bps / 1e4);
        self.overlap = Some(s.overlap);
        self
    }
}

/// `MOMLAB_THREADS` unset: rayon default; `1`: serial; `N`: at most N threads.
pub fn execution_from_env() -> Result<Execution, CliError> {
    match std::env::var("MOMLAB_THREADS") {
        Err(_) => Ok(Execution::Parallel),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(CliError::Config(format!(
                "MOMLAB_THREADS must be a positive integer, got `{v}`"
            ))),
            Ok(1) => Ok(Execution::Serial),
            Ok(n) => Ok(Execution::Threads(n)),
        },
    }
}

pub fn run(cli: Cli, exec: Execution) -> Result<(), CliError> {
    match cli.command {
        Command::Backtest(a) => cmd_backtest(&a),
        Command::Grid(a) => cmd_grid(&a, exec),
        Command::Compare(a) => cmd_compare(&a, exec),
        Command::Groups(a) => cmd_groups(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn universe(text: &str) -> Result<UniverseExpr, CliError> {
    parse_universe(text).map_err(|e| CliError::Config(format!("universe `{text}`: {e}")))
}

fn check_strategy(s: &StrategyArgs) -> Result<(), CliError> {
    if s.groups < 2 {
        return Err(CliError::Config(format!(
            "--groups must be at least 2, got {}",
            s.groups
        )));
    }
    if s.cost_bps < 0.0 || !s.cost_bps.is_finite() {
        return Err(CliError::Config(format!(
            "--cost-bps must be non-negative, got {}",
            s.cost_bps
        )));
    }
    Ok(())
}

fn spec_for(expr: UniverseExpr, s: &StrategyArgs) -> BacktestSpec {
    let mut spec = BacktestSpec::new(expr, s.criterion);
    spec.frequency = s.frequency;
    spec.groups = s.groups;
    spec.cost_per_basket = s.cost_bps / 1e4;
    spec.overlap = s.overlap;
    spec
}

fn load(data: &DataArgs, criterion: Criterion) -> Result<(PriceStore, MembershipCalendar), CliError> {
    if matches!(criterion, Criterion::NetFlow(_)) && data.flows.is_none() {
        return Err(CliError::Config(format!("criterion {criterion} needs --flows")));
    }
    let mut store = load_prices(&data.prices)?;
    if let Some(f) = &data.flows {
        store = load_flows(f, &store)?;
    }
    let membership = load_membership(&data.membership, &store)?;
    Ok((store, membership))
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("cannot create {}: {e}", dir.display())))
}

fn write(dir: &Path, name: &str, body: impl AsRef<[u8]>) -> Result<(), CliError> {
    let path = dir.join(name);
    write_atomic(&path, body.as_ref()).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

fn write_manifest(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(cfg).map_err(|e| CliError::Internal(e.to_string()))?;
    body.push('\n');
    write(dir, "manifest.json", body)
}

pub fn cmd_backtest(a: &BacktestArgs) -> Result<(), CliError> {
    check_strategy(&a.strategy)?;
    if a.lookback == 0 || a.holding == 0 {
        return Err(CliError::Config("--lookback and --holding must be at least 1".into()));
    }
    let expr = universe(&a.universe)?;
    let (store, membership) = load(&a.data, a.strategy.criterion)?;
    let spec = spec_for(expr, &a.strategy).with_horizon(a.lookback, a.holding);
    let res = run_backtest(&spec, &store, &membership)?;

    let out = &a.strategy.out;
    prepare_out(out)?;
    write(out, "summary.csv", report::summary_csv(&res))?;
    write(out, "series.csv", report::series_csv(&res))?;
    write(out, "cohorts.csv", report::cohorts_csv(&res))?;
    write(out, "portfolios.csv", report::portfolios_csv(&res, &store))?;
    let mut cfg = RunConfig::new("backtest", out)
        .with_data(&a.data)
        .with_strategy(&a.strategy);
    cfg.universes = vec![a.universe.clone()];
    cfg.lookbacks = vec![a.lookback];
    cfg.holdings = vec![a.holding];
    write_manifest(out, &cfg)
}

fn default_return_bound(freq: Frequency) -> f64 {
    match freq {
        Frequency::Monthly => 0.025,
        Frequency::Weekly => 0.005,
    }
}

fn check_bound(b: Option<f64>, freq: Frequency) -> Result<f64, CliError> {
    match b {
        None => Ok(default_return_bound(freq)),
        Some(b) if b > 0.0 && b.is_finite() => Ok(b),
        Some(b) => Err(CliError::Config(format!("--return-bound must be positive, got {b}"))),
    }
}

fn heatmap(title: &str, grid: &Grid<Option<f64>>, scale: ColorScale, percent: bool) -> String {
    heatmap_spec(title, grid, scale, percent).render()
}

/// grid.csv, grid_errors.csv, the four heatmaps and optional matrices for one grid.
fn write_grid_outputs(dir: &Path, label: &str, grid: &GridResult, bound: f64, matrix: bool) -> Result<(), CliError> {
    prepare_out(dir)?;
    write(dir, "grid.csv", report::grid_csv(grid))?;
    write(dir, "grid_errors.csv", report::grid_errors_csv(grid))?;

    let pf = grid.map(|c| c.as_ref().ok().map(|s| s.profitability as f64));
    let ret = grid.map(|c| c.as_ref().ok().map(|s| s.implemented_return));
    let vol = grid.map(|c| c.as_ref().ok().map(|s| s.volatility));
    let sr = grid.map(|c| c.as_ref().ok().and_then(|s| s.sharpe));
    write(
        dir,
        "profitability.svg",
        Heatmap {
            label_decimals: 0,
            ..heatmap_spec(&format!("{label}: profitability"), &pf, ColorScale::TwoColor, false)
        }
        .render(),
    )?;
    write(
        dir,
        "return.svg",
        heatmap(
            &format!("{label}: implemented return (%)"),
            &ret,
            ColorScale::Diverging { lo: -bound, hi: bound },
            true,
        ),
    )?;
    write(
        dir,
        "volatility.svg",
        heatmap(
            &format!("{label}: volatility (%)"),
            &vol,
            ColorScale::zero_to_max(&vol.cells),
            true,
        ),
    )?;
    write(
        dir,
        "sharpe.svg",
        heatmap(
            &format!("{label}: Sharpe ratio"),
            &sr,
            ColorScale::symmetric_from(&sr.cells),
            false,
        ),
    )?;
    if matrix {
        for (i, name) in report::GRID_METRICS.iter().enumerate() {
            let m = grid.map(|c| {
                c.as_ref().ok().and_then(|s| {
                    let v = report::metric_values(s);
                    v[i].parse::<f64>().ok()
                })
            });
            write(dir, &format!("matrix_{name}.csv"), report::matrix_csv(&m))?;
        }
    }
    Ok(())
}

fn heatmap_spec<'a>(title: &'a str, grid: &'a Grid<Option<f64>>, scale: ColorScale, percent: bool) -> Heatmap<'a> {
    Heatmap {
        title,
        row_label: "lookback J",
        col_label: "holding K",
        rows: &grid.lookbacks,
        cols: &grid.holdings,
        values: &grid.cells,
        scale,
        label_factor: if percent { 100.0 } else { 1.0 },
        label_decimals: 2,
    }
}

fn all_failed(grid: &GridResult) -> bool {
    grid.cells.iter().all(|c| c.is_err())
}

pub fn cmd_grid(a: &GridArgs, exec: Execution) -> Result<(), CliError> {
    check_strategy(&a.strategy)?;
    let bound = check_bound(a.return_bound, a.strategy.frequency)?;
    let expr = universe(&a.universe)?;
    let (store, membership) = load(&a.data, a.strategy.criterion)?;
    let spec = spec_for(expr, &a.strategy);
    let grid = run_grid(&spec, &a.lookback.0, &a.holding.0, &store, &membership, exec);

    let out = &a.strategy.out;
    write_grid_outputs(out, &a.universe, &grid, bound, a.matrix)?;
    let mut cfg = RunConfig::new("grid", out)
        .with_data(&a.data)
        .with_strategy(&a.strategy);
    cfg.universes = vec![a.universe.clone()];
    cfg.lookbacks = a.lookback.0.clone();
    cfg.holdings = a.holding.0.clone();
    cfg.matrix = a.matrix;
    cfg.return_bound = Some(bound);
    write_manifest(out, &cfg)?;
    if all_failed(&grid) {
        return Err(CliError::Data("every grid cell failed; see grid_errors.csv".into()));
    }
    Ok(())
}

pub fn cmd_compare(a: &CompareArgs, exec: Execution) -> Result<(), CliError> {
    check_strategy(&a.strategy)?;
    let bound = check_bound(a.return_bound, a.strategy.frequency)?;
    let mut labels: Vec<String> = Vec::new();
    if let Some(b) = &a.baseline {
        labels.push(b.clone());
    }
    if a.universe.is_empty() {
        let base = labels.first().cloned().unwrap_or_else(|| "200".to_string());
        if labels.is_empty() {
            labels.push(base.clone());
        }
        labels.extend(STANDARD_UNIVERSES.iter().filter(|u| **u != base).map(|u| u.to_string()));
    } else {
        labels.extend(a.universe.iter().cloned());
    }
    if labels.len() < 2 {
        return Err(CliError::Config(
            "compare needs a baseline and at least one other universe".into(),
        ));
    }
    let exprs = labels.iter().map(|l| universe(l)).collect::<Result<Vec<_>, _>>()?;
    let (store, membership) = load(&a.data, a.strategy.criterion)?;
    let spec = spec_for(exprs[0].clone(), &a.strategy);
    let cmp = run_universe_comparison(
        &spec,
        &exprs[0],
        &exprs[1..],
        &a.lookback.0,
        &a.holding.0,
        &store,
        &membership,
        exec,
    );

    let out = &a.strategy.out;
    prepare_out(out)?;
    write_grid_outputs(
        &out.join("universes").join(&labels[0]),
        &labels[0],
        &cmp.baseline.grid,
        bound,
        false,
    )?;
    for ((label, ug), rel) in labels[1..].iter().zip(&cmp.universes).zip(&cmp.relative) {
        write_grid_outputs(&out.join("universes").join(label), label, &ug.grid, bound, false)?;
        let dir = out.join("relative").join(label);
        prepare_out(&dir)?;
        write(&dir, "relative.csv", report::relative_csv(rel))?;
        write(
            &dir,
            "relative_return.svg",
            heatmap(
                &format!("{label} vs {}: implemented return difference (%)", labels[0]),
                &rel.relative_return,
                ColorScale::symmetric_from(&rel.relative_return.cells),
                true,
            ),
        )?;
        write(
            &dir,
            "relative_sharpe.svg",
            heatmap(
                &format!("{label} vs {}: Sharpe difference", labels[0]),
                &rel.relative_sharpe,
                ColorScale::symmetric_from(&rel.relative_sharpe.cells),
                false,
            ),
        )?;
    }
    let mut cfg = RunConfig::new("compare", out)
        .with_data(&a.data)
        .with_strategy(&a.strategy);
    cfg.universes = labels;
    cfg.lookbacks = a.lookback.0.clone();
    cfg.holdings = a.holding.0.clone();
    cfg.return_bound = Some(bound);
    write_manifest(out, &cfg)
}

pub fn cmd_groups(a: &GroupsArgs) -> Result<(), CliError> {
    if a.groups < 2 || a.lookback == 0 {
        return Err(CliError::Config(
            "--groups must be at least 2 and --lookback at least 1".into(),
        ));
    }
    let bound = check_bound(a.return_bound, a.frequency)?;
    let expr = universe(&a.universe)?;
    let (store, membership) = load(&a.data, a.criterion)?;
    let mut spec = BacktestSpec::new(expr, a.criterion);
    spec.frequency = a.frequency;
    spec.groups = a.groups;
    spec.lookback = a.lookback;

    let mut csv = String::from("K,group,mean_return,cohorts\n");
    let group_ids: Vec<usize> = (1..=a.groups).rev().collect();
    let mut cells = vec![None; a.groups * a.holding.0.len()];
    for (c, &k) in a.holding.0.iter().enumerate() {
        spec.holding = k;
        match run_group_returns(&spec, &store, &membership) {
            Ok(g) => {
                for (i, r) in g.mean_per_period.iter().enumerate() {
                    csv.push_str(&format!("{k},{},{},{}\n", i + 1, report::num(*r), g.cohorts));
                    // Row 0 of the heatmap is the top group.
                    cells[(a.groups - 1 - i) * a.holding.0.len() + c] = Some(*r);
                }
            }
            Err(e) => log::warn!("K={k}: {e}"),
        }
    }
    let grid = Grid {
        lookbacks: group_ids,
        holdings: a.holding.0.clone(),
        cells,
    };
    prepare_out(&a.out)?;
    write(&a.out, "groups.csv", csv)?;
    write(
        &a.out,
        "groups.svg",
        Heatmap {
            row_label: "group (1 = lowest score)",
            ..heatmap_spec(
                &format!("{}: {} group returns (%)", a.universe, a.criterion),
                &grid,
                ColorScale::Diverging { lo: -bound, hi: bound },
                true,
            )
        }
        .render(),
    )?;
    let mut cfg = RunConfig::new("groups", &a.out).with_data(&a.data);
    cfg.frequency = Some(a.frequency);
    cfg.criterion = Some(a.criterion.to_string());
    cfg.groups = Some(a.groups);
    cfg.universes = vec![a.universe.clone()];
    cfg.lookbacks = vec![a.lookback];
    cfg.holdings = a.holding.0.clone();
    cfg.return_bound = Some(bound);
    write_manifest(&a.out, &cfg)?;
    if grid.cells.iter().all(|c| c.is_none()) {
        return Err(CliError::Data("no holding period produced group returns".into()));
    }
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let params = a.params();
    let market = generate_market(&params)?;
    prepare_out(&a.out)?;
    write(&a.out, "prices.csv", market.prices_csv())?;
    write(&a.out, "flows.csv", market.flows_csv())?;
    write(&a.out, "membership.csv", market.membership_csv())?;
    let mut cfg = RunConfig::new("synth", &a.out);
    cfg.seed = Some(a.seed);
    cfg.synth = Some(params);
    write_manifest(&a.out, &cfg)
}
