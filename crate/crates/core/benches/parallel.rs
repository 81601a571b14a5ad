//! Data-parallel core against the sequential fallback on the same inputs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use risk_pde::hjb::{solve_v, BoundaryPolicy, SolveConfig};
use risk_pde::oce::value_fn_mc;
use risk_pde::par;
use risk_pde::sde::{DiffusionModel, Payoff};
use risk_pde::LossSpec;

fn monte_carlo(c: &mut Criterion) {
    let model = DiffusionModel::ou(1.0, 1.0, 0.0, 1.0, Payoff::Sin, 0.0);
    let loss = LossSpec::entropic();
    let mut group = c.benchmark_group("oce_mc_50k_paths");
    group.sample_size(10);
    let run = || value_fn_mc(&model, &loss, 0.0, 0.0, 1.0, 50, 50_000, 1).unwrap();
    group.bench_function(BenchmarkId::new("rayon", par::is_parallel()), |b| b.iter(run));
    group.bench_function("sequential", |b| b.iter(|| par::sequential(run)));
    group.finish();
}

fn hjb(c: &mut Criterion) {
    let model = DiffusionModel::brownian(1.0, 0.0, 1.0, Payoff::Tanh, 0.0);
    let loss = LossSpec::entropic();
    let cfg = SolveConfig {
        steps: 100,
        y_nodes: 61,
        z_nodes: 41,
        z_range: Some((0.05, 6.0)),
        n_schedule: vec![1.0, 4.0],
        boundary: BoundaryPolicy::MonteCarlo { paths: 1000, time_stride: 20, steps_per_unit: 1.0, seed: 0 },
        ..SolveConfig::default()
    };
    let mut group = c.benchmark_group("hjb_solve_100x61x41");
    group.sample_size(10);
    let run = || solve_v(&model, &loss, &cfg).unwrap();
    group.bench_function(BenchmarkId::new("rayon", par::is_parallel()), |b| b.iter(run));
    group.bench_function("sequential", |b| b.iter(|| par::sequential(run)));
    group.finish();
}

criterion_group!(benches, monte_carlo, hjb);
criterion_main!(benches);
