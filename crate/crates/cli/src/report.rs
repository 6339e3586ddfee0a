//! CSV tables and file output.
//!
//! Floats are written with Rust's shortest round-trip `Display`; undefined values (Sharpe and
//! t with zero volatility, failed grid cells) are written as empty fields.

use std::fs;
use std::io;
use std::path::Path;

use momlab_core::engine::{BacktestResult, GridResult, RelativeGrids};
use momlab_core::stats::{BacktestSummary, Grid};
use momlab_core::PriceStore;

pub const SUMMARY_HEADER: &str = "J,K,universe,criterion,r,sigma,PF,r_I,SR,t,n";
pub const GRID_HEADER: &str = "J,K,metric,value";
/// Metric names of `grid.csv`, in row order within a cell.
pub const GRID_METRICS: [&str; 7] = ["r", "sigma", "PF", "r_I", "SR", "t", "n"];

pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

/// Quotes a field if it would break a CSV row.
fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Values of [`GRID_METRICS`] for one summary.
pub fn metric_values(s: &BacktestSummary) -> [String; 7] {
    [
        num(s.mean_raw),
        num(s.volatility),
        s.profitability.to_string(),
        num(s.implemented_return),
        opt(s.sharpe),
        opt(s.t_stat),
        s.n_periods.to_string(),
    ]
}

pub fn summary_csv(res: &BacktestResult) -> String {
    let s = &res.summary;
    let v = metric_values(s);
    format!(
        "{SUMMARY_HEADER}\n{},{},{},{},{}\n",
        res.spec.lookback,
        res.spec.holding,
        field(&res.spec.universe_label()),
        field(&res.spec.criterion.to_string()),
        v.join(",")
    )
}

pub fn series_csv(res: &BacktestResult) -> String {
    let mut out = String::from("date,raw\n");
    for p in &res.series {
        out.push_str(&format!("{},{}\n", p.date, num(p.raw)));
    }
    out
}

pub fn cohorts_csv(res: &BacktestResult) -> String {
    let mut out = String::from("formation_date,liquidation_date,raw_return_total,long,short,ineligible\n");
    for c in &res.cohorts {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.formation_date,
            c.liquidation_date,
            num(c.raw_return_total),
            c.portfolio.long.len(),
            c.portfolio.short.len(),
            c.ineligible
        ));
    }
    out
}

pub fn portfolios_csv(res: &BacktestResult, store: &PriceStore) -> String {
    let mut buf = Vec::new();
    buf.extend_from_slice(momlab_core::portfolio::PORTFOLIO_HEADER.as_bytes());
    buf.push(b'\n');
    for c in &res.cohorts {
        c.portfolio.write_csv(store, &mut buf).expect("writing to memory");
    }
    String::from_utf8(buf).expect("utf-8")
}

/// Long format: one row per (J, K, metric); failed cells keep their rows with empty values.
pub fn grid_csv(grid: &GridResult) -> String {
    let mut out = String::from(GRID_HEADER);
    out.push('\n');
    for ((j, k), cell) in grid.iter() {
        let values = match cell {
            Ok(s) => metric_values(s),
            Err(_) => Default::default(),
        };
        for (m, v) in GRID_METRICS.iter().zip(values) {
            out.push_str(&format!("{j},{k},{m},{v}\n"));
        }
    }
    out
}

pub fn grid_errors_csv(grid: &GridResult) -> String {
    let mut out = String::from("J,K,error\n");
    for ((j, k), cell) in grid.iter() {
        if let Err(e) = cell {
            out.push_str(&format!("{j},{k},{}\n", field(&e.to_string())));
        }
    }
    out
}

/// Figure orientation: lookback rows, holding columns.
pub fn matrix_csv(grid: &Grid<Option<f64>>) -> String {
    let mut out = String::from("J\\K");
    for k in &grid.holdings {
        out.push_str(&format!(",{k}"));
    }
    out.push('\n');
    for (r, j) in grid.lookbacks.iter().enumerate() {
        out.push_str(&j.to_string());
        for c in 0..grid.holdings.len() {
            out.push(',');
            out.push_str(&opt(grid.cells[r * grid.holdings.len() + c]));
        }
        out.push('\n');
    }
    out
}

pub fn relative_csv(rel: &RelativeGrids) -> String {
    let mut out = String::from(GRID_HEADER);
    out.push('\n');
    for (((j, k), ret), (_, sr)) in rel.relative_return.iter().zip(rel.relative_sharpe.iter()) {
        out.push_str(&format!("{j},{k},relative_r_I,{}\n", opt(*ret)));
        out.push_str(&format!("{j},{k},relative_SR,{}\n", opt(*sr)));
    }
    out
}

/// Writes `body` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, body: &[u8]) -> io::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, body)?;
    fs::rename(&tmp, path)
}
