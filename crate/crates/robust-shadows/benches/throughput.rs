//! Throughput benchmarks for the hot paths: sample generation, per-sample
//! estimates, and the robust estimators.
//!
//! Run `cargo bench` for the default (parallel) build and
//! `cargo bench --no-default-features` for the sequential fallback; comparing
//! the two reports shows the speedup of the data-parallel core.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use robust_shadows::quantum::{haar_unitary, random_hermitian_observable, random_rank_r_state};
use robust_shadows::robust_stats::{truncated_mean, SampleBatch};
use robust_shadows::seeding::stream;
use robust_shadows::shadows::{collect_shadows, estimate_observables, raw_estimates, EstimatorKind};

fn bench_haar_unitary(c: &mut Criterion) {
    let mut group = c.benchmark_group("haar_unitary");
    for d in [8usize, 32] {
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, &d| {
            let mut rng = stream(1, &[d as u64]);
            b.iter(|| haar_unitary(black_box(d), &mut rng).unwrap());
        });
    }
    group.finish();
}

fn bench_collect_shadows(c: &mut Criterion) {
    let d = 8;
    let n = 2000;
    let mut rng = stream(2, &[0]);
    let rho = random_rank_r_state(d, d, &mut rng).unwrap();
    c.bench_function("collect_shadows/d8_n2000", |b| {
        b.iter(|| collect_shadows(black_box(&rho), n, 3).unwrap());
    });
}

fn bench_raw_estimates(c: &mut Criterion) {
    let d = 8;
    let mut rng = stream(4, &[0]);
    let rho = random_rank_r_state(d, d, &mut rng).unwrap();
    let obs = random_hermitian_observable(d, false, &mut rng).unwrap();
    let samples = collect_shadows(&rho, 2000, 5).unwrap();
    c.bench_function("raw_estimates/d8_n2000", |b| {
        b.iter(|| raw_estimates(black_box(&samples), &obs).unwrap());
    });
}

fn bench_estimate_observables(c: &mut Criterion) {
    let d = 8;
    let mut rng = stream(6, &[0]);
    let rho = random_rank_r_state(d, d, &mut rng).unwrap();
    let observables: Vec<_> = (0..16)
        .map(|_| random_hermitian_observable(d, false, &mut rng).unwrap())
        .collect();
    let samples = collect_shadows(&rho, 2000, 7).unwrap();
    let estimator = EstimatorKind::TruncatedMean { trim: 0.05 };
    c.bench_function("estimate_observables/d8_n2000_m16", |b| {
        b.iter(|| estimate_observables(black_box(&samples), &observables, &estimator).unwrap());
    });
}

fn bench_truncated_mean(c: &mut Criterion) {
    let mut rng = stream(8, &[0]);
    use rand::Rng;
    let values: Vec<f64> = (0..100_000).map(|_| rng.gen::<f64>()).collect();
    let batch = SampleBatch::new(values).unwrap();
    c.bench_function("truncated_mean/n1e5", |b| {
        b.iter(|| truncated_mean(black_box(&batch), 0.05).unwrap());
    });
}

criterion_group!(
    benches,
    bench_haar_unitary,
    bench_collect_shadows,
    bench_raw_estimates,
    bench_estimate_observables,
    bench_truncated_mean
);
criterion_main!(benches);
