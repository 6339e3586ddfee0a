//! CSV round trip of a generated market through the loaders.

use momlab_core::criteria::build_scores;
use momlab_core::engine::run_backtest;
use momlab_core::marketdata::{load_flows, load_prices, DayIdx, MarketDataError};
use momlab_core::synth::{generate_market, SynthParams};
use momlab_core::universe::{load_membership, parse_universe};
use momlab_core::{BacktestSpec, Criterion, FlowGroup, Frequency};

#[test]
fn full_size_market_round_trips() {
    let market = generate_market(&SynthParams::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    market.write_csvs(dir.path()).unwrap();

    let prices = std::fs::read_to_string(dir.path().join("prices.csv")).unwrap();
    assert_eq!(
        prices.lines().count() - 1 + market.gapped.len() * market.params.gap_days,
        200 * market.dates.len()
    );

    let store = load_prices(dir.path().join("prices.csv")).unwrap();
    let store = load_flows(dir.path().join("flows.csv"), &store).unwrap();
    let membership = load_membership(dir.path().join("membership.csv"), &store).unwrap();
    assert_eq!(store.instruments().len(), 200);
    assert_eq!(store.calendar().marks(Frequency::Monthly).len(), 144);
    let month_ends = market
        .dates
        .windows(2)
        .filter(|w| w[0].format("%Y%m").to_string() != w[1].format("%Y%m").to_string())
        .count()
        + 1;
    assert_eq!(month_ends, 144);

    let (direct, direct_m) = market.to_store().unwrap();
    for crit in [Criterion::CumulativeReturn, Criterion::NetFlow(FlowGroup::Foreign)] {
        let spec = BacktestSpec::new(parse_universe("200-100+50").unwrap(), crit).with_horizon(6, 3);
        let a = run_backtest(&spec, &store, &membership).unwrap();
        let b = run_backtest(&spec, &direct, &direct_m).unwrap();
        assert_eq!(a.cohorts, b.cohorts);
        assert_eq!(a.summary, b.summary);
    }
}

#[test]
fn gapped_names_are_the_only_exclusions() {
    let market = generate_market(&SynthParams::default()).unwrap();
    let (store, m) = market.to_store().unwrap();
    let u = parse_universe("200").unwrap();
    let marks = store.calendar().marks(Frequency::Monthly).to_vec();
    let mut excluded = 0;
    let mut seen = 0;
    for f in 6..marks.len() {
        let sv = build_scores(&store, &m, &u, Criterion::CumulativeReturn, Frequency::Monthly, f, 6).unwrap();
        // Direct recount: a name is out iff it lacks a bar at formation, misses more than 10% of
        // the window, or has no print within 10 trading days of the anchor.
        let anchor = marks[f - 6].0;
        let window_days: Vec<usize> = (anchor + 1..=marks[f].0).collect();
        let has = |i: usize, d: usize| store.bar(i, DayIdx(d)).is_some();
        let out = (0..200)
            .filter(|&i| {
                let have = window_days.iter().filter(|&&d| has(i, d)).count();
                let anchor_fresh = (anchor.saturating_sub(10)..=anchor).any(|d| has(i, d));
                !has(i, marks[f].0) || (have as f64) < 0.9 * window_days.len() as f64 || !anchor_fresh
            })
            .count();
        assert_eq!(sv.entries.len(), 200 - out, "formation {f}");
        assert!(out <= market.gapped.len());
        excluded += sv.ineligible;
        seen += sv.ineligible + sv.entries.len();
    }
    assert_eq!(market.gapped.len(), 3);
    assert!((excluded as f64) / (seen as f64) < 0.02);
}

#[test]
fn loader_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    match load_prices(&missing) {
        Err(MarketDataError::Io { path, .. }) => assert!(path.contains("nope.csv")),
        other => panic!("{other:?}"),
    }
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "date,ticker,close\n2020-01-02,A,1\n").unwrap();
    assert!(matches!(load_prices(&bad), Err(MarketDataError::BadHeader { .. })));
    std::fs::write(
        &bad,
        "date,instrument,adj_close,volume,shares_outstanding,market_cap\n2020-01-02,A,-1,1,1,1\n",
    )
    .unwrap();
    assert!(matches!(
        load_prices(&bad),
        Err(MarketDataError::NonPositivePrice { line: 2, .. })
    ));
}
