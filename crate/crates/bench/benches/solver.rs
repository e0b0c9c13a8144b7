//! Rebalancing-solver throughput across problem sizes and cost regimes.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spofolio_bench::random_instance;
use spofolio_core::{solve, DEFAULT_TOL};
use std::hint::black_box;

fn bench_solve_sizes(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    for n in [4usize, 8, 16, 32] {
        let problem = random_instance(42, n, 20.0, 0.002);
        group.bench_with_input(BenchmarkId::new("assets", n), &problem, |b, p| {
            b.iter(|| solve(black_box(p), DEFAULT_TOL).unwrap());
        });
    }
    group.finish();
}

fn bench_solve_regimes(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_regimes");
    let cases = [
        ("risk_neutral", 0.0, 0.0),
        ("risk_averse", 20.0, 0.0),
        ("costly_trades", 20.0, 0.01),
        ("no_trade_zone", 1.0, 0.5),
    ];
    for (label, lambda, kappa) in cases {
        let problem = random_instance(7, 8, lambda, kappa);
        group.bench_function(label, |b| {
            b.iter(|| solve(black_box(&problem), DEFAULT_TOL).unwrap());
        });
    }
    group.finish();
}

criterion_group!(benches, bench_solve_sizes, bench_solve_regimes);
criterion_main!(benches);
