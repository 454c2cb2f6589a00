use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use ghx_mrac::scenario::{run_multiplier_sweep, simulate_scenario, Execution, ScenarioConfig};

fn config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset("perturbed_ac_explicit_d").expect("preset");
    cfg.horizon = 2000.0;
    cfg
}

fn sweep(c: &mut Criterion) {
    let cfg = config();
    let grid = [1.0, 1.2, 1.4, 1.6, 1.8];
    let mut group = c.benchmark_group("multiplier_sweep");
    group.sample_size(10);
    for (name, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| run_multiplier_sweep(black_box(&cfg), &grid, exec).expect("sweep"))
        });
    }
    group.finish();
}

fn scenario(c: &mut Criterion) {
    let cfg = config();
    let mut group = c.benchmark_group("four_runs");
    group.sample_size(10);
    for (name, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| simulate_scenario(black_box(&cfg), exec).expect("scenario"))
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, scenario);
criterion_main!(benches);
