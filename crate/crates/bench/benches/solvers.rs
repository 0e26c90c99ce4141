//! Benchmarks of the solver hot paths: the exact 1D implicit TV step, one
//! 2D dual-projection step, one implicit quantile-flow step, and the
//! transport distance.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gradflow_core::tvflow::{tv_prox_1d, tv_prox_2d, Bc, GridFunction};
use gradflow_core::wflow1d::{jko_step, wasserstein_p, FreeEnergySpec, QuantileRepr};
use std::hint::black_box;

fn noisy_profile(n: usize) -> Vec<f64> {
    // Deterministic piecewise signal with pseudo-noise.
    (0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            let base = if x < 0.3 {
                1.0
            } else if x < 0.7 {
                0.2
            } else {
                -0.4
            };
            let jitter = ((i as u64).wrapping_mul(2654435761) % 1000) as f64 / 5000.0;
            base + jitter
        })
        .collect()
}

fn bench_tv_prox_1d(c: &mut Criterion) {
    let mut group = c.benchmark_group("tv_prox_1d");
    for n in [256usize, 4096] {
        let u = GridFunction::new_1d(noisy_profile(n), 1.0 / n as f64, Bc::Neumann);
        group.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| {
            b.iter(|| tv_prox_1d(black_box(u), 0.01).unwrap())
        });
    }
    group.finish();
}

fn bench_tv_prox_2d(c: &mut Criterion) {
    let mut group = c.benchmark_group("tv_prox_2d");
    group.sample_size(10);
    for n in [64usize, 128] {
        let h = 1.0 / n as f64;
        let u = GridFunction::disc_2d(n, h, Bc::Dirichlet, 1.0, 0.5, 0.5, 0.25);
        group.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| {
            b.iter(|| tv_prox_2d(black_box(u), 2.5e-4, 5000, 1e-6).unwrap())
        });
    }
    group.finish();
}

fn bench_jko_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("jko_step");
    let spec = FreeEnergySpec::fokker_planck(1.0);
    for m in [512usize, 2048] {
        let x = QuantileRepr::gaussian(m, 2.0, 1.0);
        group.bench_with_input(BenchmarkId::from_parameter(m), &x, |b, x| {
            b.iter(|| jko_step(black_box(&spec), black_box(x), 0.01, 2.0).unwrap())
        });
    }
    group.finish();
}

fn bench_wasserstein(c: &mut Criterion) {
    let a = QuantileRepr::gaussian(4096, 0.0, 1.0);
    let b_repr = QuantileRepr::gaussian(4096, 1.0, 1.3);
    c.bench_function("wasserstein_p_4096", |b| {
        b.iter(|| wasserstein_p(black_box(&a), black_box(&b_repr), 2.0).unwrap())
    });
}

criterion_group!(
    benches,
    bench_tv_prox_1d,
    bench_tv_prox_2d,
    bench_jko_step,
    bench_wasserstein
);
criterion_main!(benches);
