//! Property checks over generated data.

use chrono::NaiveDate;
use momlab_core::criteria::build_scores;
use momlab_core::marketdata::{DailyBar, DayIdx, Window};
use momlab_core::portfolio::rank_and_group;
use momlab_core::synth::{generate_market, SynthParams};
use momlab_core::universe::parse_universe;
use momlab_core::{Criterion, FlowGroup, Frequency, IndexId, InstrumentId, PriceStore, ScoreVector};
use proptest::prelude::*;

fn small_market(seed: u64, n: usize) -> momlab_core::synth::SynthMarket {
    generate_market(&SynthParams {
        n_instruments: n,
        n_years: 2,
        seed,
        index_sizes: (n / 4, n / 2),
        gap_fraction: 0.1,
        gap_days: 15,
        rerank_months: 1,
        ..SynthParams::default()
    })
    .unwrap()
}

fn day(d: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(d as u64)
}

fn bar(d: usize, px: f64) -> DailyBar {
    DailyBar {
        date: day(d),
        adj_close: px,
        volume: 10,
        shares_outstanding: 100,
        market_cap: px * 100.0,
    }
}

/// Group boundaries recomputed from the cut formula.
fn expected_sizes(n: usize, g: usize) -> Vec<usize> {
    (0..g).map(|i| (i + 1) * n / g - i * n / g).collect()
}

fn score_vector(scores: &[f64]) -> ScoreVector {
    ScoreVector {
        date: day(0),
        formation: DayIdx(0),
        entries: scores.iter().copied().enumerate().collect(),
        ineligible: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flow_legs_sum_to_zero(seed in 0u64..1000) {
        let (store, _) = small_market(seed, 12).to_store().unwrap();
        for inst in 0..store.instruments().len() {
            for r in store.flow_records(inst).unwrap() {
                prop_assert_eq!(r.institutional_net + r.foreign_net + r.individual_net, 0);
            }
        }
    }

    #[test]
    fn universe_partitions_hold_every_date(seed in 0u64..1000, n in 8usize..40) {
        let (store, m) = small_market(seed, n).to_store().unwrap();
        let e = |s: &str| parse_universe(s).unwrap();
        for &date in store.calendar().dates() {
            let f = m.members(&e("50"), date);
            let h = m.members(&e("100"), date);
            let t = m.members(&e("200"), date);
            let hf = m.members(&e("100-50"), date);
            let th = m.members(&e("200-100"), date);
            prop_assert!(hf.is_disjoint(&f));
            prop_assert_eq!(hf.union(&f).copied().collect::<std::collections::BTreeSet<_>>(), h.clone());
            prop_assert!(th.is_disjoint(&h));
            prop_assert_eq!(th.union(&h).copied().collect::<std::collections::BTreeSet<_>>(), t.clone());
            prop_assert_eq!(m.members(&e("200-100+50"), date).len(), t.len() - h.len() + f.len());
            prop_assert_eq!(f.len(), n / 4);
            prop_assert_eq!(h.len(), n / 2);
            prop_assert_eq!(t.len(), n);
            prop_assert_eq!(m.base_members(IndexId::F, date), f);
        }
    }

    #[test]
    fn returns_compound(p in prop::collection::vec(0.5f64..200.0, 3..12)) {
        let id = InstrumentId::new("A").unwrap();
        let store = PriceStore::from_bars(p.iter().enumerate().map(|(d, &px)| (id.clone(), bar(d, px)))).unwrap();
        let last = p.len() - 1;
        let chained = (0..last).fold(1.0, |acc, d| acc * (1.0 + store.period_return(0, DayIdx(d), DayIdx(d + 1)).unwrap()));
        let direct = store.period_return(0, DayIdx(0), DayIdx(last)).unwrap();
        prop_assert!((chained - 1.0 - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn group_sizes_follow_cut_formula(n in 2usize..300, g in 2usize..12) {
        prop_assume!(n >= g);
        let scores: Vec<f64> = (0..n).map(|i| ((i * 7919) % 101) as f64).collect();
        let groups = rank_and_group(&score_vector(&scores), g).unwrap();
        prop_assert_eq!(groups.sizes(), expected_sizes(n, g));
    }

    #[test]
    fn grouping_ignores_strictly_increasing_transforms(scores in prop::collection::vec(-1.0f64..1.0, 10..60)) {
        let a = rank_and_group(&score_vector(&scores), 5).unwrap();
        let t: Vec<f64> = scores.iter().map(|x| (3.0 * x).exp() + 2.0).collect();
        let b = rank_and_group(&score_vector(&t), 5).unwrap();
        prop_assert_eq!(a.groups, b.groups);
    }

    #[test]
    fn ties_break_by_instrument_order(n in 4usize..50, rotate in 0usize..50) {
        let mut sv = score_vector(&vec![0.5; n]);
        let r = rotate % n;
        sv.entries.rotate_left(r);
        let groups = rank_and_group(&sv, 4).unwrap();
        let flat: Vec<usize> = groups.groups.concat();
        prop_assert_eq!(flat, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn scaling_prices_keeps_momentum_scores(seed in 0u64..1000, k in 0.1f64..50.0) {
        let market = small_market(seed, 10);
        let (a, m) = market.to_store().unwrap();
        let scaled = PriceStore::from_bars(market.bars.iter().map(|(id, b)| {
            let mut b = b.clone();
            b.adj_close *= k;
            b.market_cap *= k;
            (id.clone(), b)
        }))
        .unwrap();
        let u = parse_universe("200").unwrap();
        for crit in [Criterion::CumulativeReturn, Criterion::MarketCap] {
            let sa = build_scores(&a, &m, &u, crit, Frequency::Monthly, 12, 6).unwrap();
            let sb = build_scores(&scaled, &m, &u, crit, Frequency::Monthly, 12, 6).unwrap();
            let ga = rank_and_group(&sa, 3).unwrap();
            let gb = rank_and_group(&sb, 3).unwrap();
            prop_assert_eq!(ga.groups, gb.groups);
            if crit == Criterion::CumulativeReturn {
                for (x, y) in sa.entries.iter().zip(&sb.entries) {
                    prop_assert!((x.1 - y.1).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn individual_flow_mirrors_observed_groups(seed in 0u64..1000) {
        let (store, _) = small_market(seed, 10).to_store().unwrap();
        let marks = store.calendar().marks(Frequency::Monthly).to_vec();
        let window = Window { anchor: marks[10], end: marks[13] };
        for inst in 0..store.instruments().len() {
            let shares: Vec<u64> = window.days().filter_map(|d| store.bar(inst, d)).map(|b| b.shares_outstanding).collect();
            if shares.windows(2).any(|w| w[0] != w[1]) {
                continue;
            }
            let s = |g| Criterion::NetFlow(g).score(&store, inst, window);
            if let (Ok(i), Ok(n), Ok(f)) = (s(FlowGroup::Individual), s(FlowGroup::Institutional), s(FlowGroup::Foreign)) {
                prop_assert!((i + n + f).abs() <= 1e-12, "{i} {n} {f}");
            }
        }
    }
}
