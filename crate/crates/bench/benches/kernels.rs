use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qaction::eigenvalue::{lambda_lattice, operator_probe, WaveParameters, DEFAULT_PROBE_STEP};
use qaction::phase_flow::integrate_flow;
use qaction::phase_functional::consistency_gap;
use qaction::stationarity::StationarySearch;
use qaction_bench::{initial_data, lattice, A, B, MASS, SIGMA2};

fn flow(c: &mut Criterion) {
    let mut group = c.benchmark_group("integrate_flow");
    for n in [1_000usize, 10_000] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| integrate_flow(black_box(initial_data()), 1.0, n).unwrap())
        });
    }
    group.finish();
}

fn lattice_eigenvalue(c: &mut Criterion) {
    let mut group = c.benchmark_group("lambda_lattice");
    for n in [1_000usize, 10_000, 100_000] {
        let (w, flow) = lattice(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| lambda_lattice(black_box(&w), &flow, MASS).unwrap())
        });
    }
    group.finish();
}

fn operator(c: &mut Criterion) {
    let mut group = c.benchmark_group("operator_probe");
    for n in [16usize, 64] {
        let (w, _) = lattice(n);
        let params = WaveParameters::phase_only(initial_data(), MASS, 1.0, 1.0)
            .with_real_part(qaction::FourVector::new(0.05, 0.02, -0.01, 0.03), 0.1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| operator_probe(black_box(&params), &w, DEFAULT_PROBE_STEP).unwrap())
        });
    }
    group.finish();
}

fn stationary(c: &mut Criterion) {
    let search = StationarySearch::new(A, B, MASS).scan(Vec::new());
    c.bench_function("stationary_search", |b| {
        b.iter(|| search.run(black_box(SIGMA2), 0.7).unwrap())
    });
}

fn phase(c: &mut Criterion) {
    let (w, _) = lattice(10_000);
    c.bench_function("consistency_gap/10000", |b| {
        b.iter(|| consistency_gap(black_box(&w), SIGMA2, &A, &B, 1.0).unwrap())
    });
}

criterion_group!(
    benches,
    flow,
    lattice_eigenvalue,
    operator,
    stationary,
    phase
);
criterion_main!(benches);
