//! Random tiny markets and the engine-versus-reference comparison.

use momlab_core::engine::{run_backtest, BacktestResult, EngineError};
use momlab_core::synth::{
    generate_market, oracle_backtest, MomentumCarrier, OracleError, OracleResult, OracleSpec, SynthMarket, SynthParams,
};
use momlab_core::universe::{parse_universe, STANDARD_UNIVERSES};
use momlab_core::{BacktestSpec, Criterion, PriceStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-12;

pub struct Instance {
    pub market: SynthMarket,
    pub spec: BacktestSpec,
}

pub fn tiny_instance(case: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
    let n = rng.random_range(4..=10);
    let params = SynthParams {
        n_instruments: n,
        n_years: 2,
        seed: case,
        momentum_strength: rng.random_range(-1.0..=1.0),
        momentum_carrier: if rng.random_bool(0.5) {
            MomentumCarrier::All
        } else {
            MomentumCarrier::CapRanks {
                first: 2,
                last: n / 2 + 1,
            }
        },
        gap_fraction: [0.0, 0.2, 0.4][rng.random_range(0..3)],
        gap_days: rng.random_range(5..=30),
        index_sizes: ((n / 4).max(1), (n / 2).max(1)),
        ..SynthParams::default()
    };
    let mut market = generate_market(&params).unwrap();
    if case.is_multiple_of(4) {
        // Clone one price path onto another so cumulative returns tie.
        let src: Vec<(chrono::NaiveDate, f64)> = market
            .bars
            .iter()
            .filter(|(id, _)| id.as_str() == "S001")
            .map(|(_, b)| (b.date, b.adj_close))
            .collect();
        for (id, b) in market.bars.iter_mut() {
            if id.as_str() == "S002" {
                if let Some((_, px)) = src.iter().find(|(d, _)| *d == b.date) {
                    b.adj_close = *px;
                    b.market_cap = px * b.shares_outstanding as f64;
                }
            }
        }
    }
    let universe = STANDARD_UNIVERSES[rng.random_range(0..STANDARD_UNIVERSES.len())];
    let criterion = Criterion::ALL[(case % 6) as usize];
    let mut spec = BacktestSpec::new(parse_universe(universe).unwrap(), criterion)
        .with_horizon(rng.random_range(1..=4), rng.random_range(1..=4));
    spec.groups = rng.random_range(2..=(n / 2).max(2));
    spec.cost_per_basket = rng.random_range(0.0..0.01);
    Instance { market, spec }
}

pub fn oracle_spec(spec: &BacktestSpec) -> OracleSpec {
    OracleSpec {
        universe: spec.universe_label(),
        criterion: spec.criterion.to_string(),
        frequency: spec.frequency.to_string(),
        lookback: spec.lookback,
        holding: spec.holding,
        groups: spec.groups,
        cost_per_basket: spec.cost_per_basket,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => close(x, y),
        (None, None) => true,
        _ => false,
    }
}

/// Returns a description of the first mismatch.
pub fn compare(engine: &BacktestResult, oracle: &OracleResult, store: &PriceStore) -> Result<(), String> {
    if engine.cohorts.len() != oracle.cohorts.len() {
        return Err(format!(
            "cohort count {} vs {}",
            engine.cohorts.len(),
            oracle.cohorts.len()
        ));
    }
    let names = |legs: &[(usize, f64)]| -> Vec<(String, f64)> {
        legs.iter()
            .map(|(i, w)| (store.instruments()[*i].to_string(), *w))
            .collect()
    };
    for (e, o) in engine.cohorts.iter().zip(&oracle.cohorts) {
        if e.formation_date != o.formation_date || e.liquidation_date != o.liquidation_date {
            return Err(format!(
                "dates {} {} vs {} {}",
                e.formation_date, e.liquidation_date, o.formation_date, o.liquidation_date
            ));
        }
        if names(&e.portfolio.long) != o.long || names(&e.portfolio.short) != o.short {
            return Err(format!("legs differ at {}", e.formation_date));
        }
        if !close(e.raw_return_total, o.raw_return_total) {
            return Err(format!("raw {} vs {}", e.raw_return_total, o.raw_return_total));
        }
        if e.ineligible != o.ineligible {
            return Err(format!("ineligible {} vs {}", e.ineligible, o.ineligible));
        }
    }
    for (p, (d, r)) in engine.series.iter().zip(&oracle.series) {
        if p.date != *d || !close(p.raw, *r) {
            return Err(format!("series {} {} vs {} {}", p.date, p.raw, d, r));
        }
    }
    let (e, o) = (&engine.summary, &oracle.summary);
    let ok = close(e.mean_raw, o.mean_raw)
        && close(e.volatility, o.volatility)
        && e.profitability == o.profitability
        && close(e.implemented_return, o.implemented_return)
        && close_opt(e.sharpe, o.sharpe)
        && close_opt(e.t_stat, o.t_stat)
        && e.reject_zero_mean == o.reject_zero_mean
        && e.n_periods == o.n_periods
        && close(e.cost_per_period, o.cost_per_period);
    if ok {
        Ok(())
    } else {
        Err(format!("summary {e:?} vs {o:?}"))
    }
}

fn same_error(e: &EngineError, o: &OracleError) -> bool {
    matches!(
        (e, o),
        (
            EngineError::InsufficientHistory { .. },
            OracleError::InsufficientHistory
        ) | (EngineError::EmptyUniverse { .. }, OracleError::EmptyUniverse)
            | (EngineError::Stats(_), OracleError::SeriesTooShort(_))
    )
}

/// Runs one case; `Ok(true)` when both sides produced results.
pub fn check_case(case: u64) -> Result<bool, String> {
    let inst = tiny_instance(case);
    let (store, membership) = inst.market.to_store().unwrap();
    let (bars, flows, intervals) = inst.market.oracle_inputs();
    let engine = run_backtest(&inst.spec, &store, &membership);
    let oracle = oracle_backtest(&oracle_spec(&inst.spec), &bars, &flows, &intervals);
    match (engine, oracle) {
        (Ok(e), Ok(o)) => compare(&e, &o, &store).map(|_| true),
        (Err(e), Err(o)) if same_error(&e, &o) => Ok(false),
        (e, o) => Err(format!("outcome differs: engine {:?} / oracle {:?}", e.err(), o.err())),
    }
}
