//! Serial vs rayon grid evaluation over a synthetic 200-name market.

use criterion::{criterion_group, criterion_main, Criterion as Bench};
use momlab_core::engine::run_grid;
use momlab_core::synth::{generate_market, SynthParams};
use momlab_core::universe::parse_universe;
use momlab_core::{BacktestSpec, Criterion, Execution};

fn grid(c: &mut Bench) {
    let params = SynthParams {
        n_years: 6,
        ..SynthParams::momentum_market(1)
    };
    let (store, membership) = generate_market(&params).unwrap().to_store().unwrap();
    let spec = BacktestSpec::new(parse_universe("200").unwrap(), Criterion::CumulativeReturn);
    let range: Vec<usize> = (1..=6).collect();

    let mut g = c.benchmark_group("grid_6x6");
    g.sample_size(10);
    for (name, exec) in [("serial", Execution::Serial), ("parallel", Execution::Parallel)] {
        g.bench_function(name, |b| {
            b.iter(|| run_grid(&spec, &range, &range, &store, &membership, exec))
        });
    }
    g.finish();
}

criterion_group!(benches, grid);
criterion_main!(benches);
