use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ddlink_bench::{params, random_grid, tdl_d_channels};
use ddlink_core::access::uniform_power;
use ddlink_core::linkmodel::otfs_sum_rate;
use ddlink_core::rxchain::LmmseDetector;
use ddlink_core::{build_h_dd, AccessScheme};
use nalgebra::DVector;
use std::hint::black_box;

fn channel_matrix(c: &mut Criterion) {
    let mut group = c.benchmark_group("h_dd");
    for (m, n) in [(16, 8), (64, 16)] {
        let p = params(m, n);
        let ch = tdl_d_channels(&p, 1, 2).remove(0);
        group.bench_function(BenchmarkId::from_parameter(format!("{m}x{n}")), |b| {
            b.iter(|| build_h_dd(black_box(&ch), &p))
        });
    }
    group.finish();
}

fn sum_rate(c: &mut Criterion) {
    let p = params(64, 16);
    let channels = tdl_d_channels(&p, 4, 3);
    let rho = uniform_power(&AccessScheme::Ddma.mask(&p, 4).unwrap(), 1.0).unwrap();
    c.bench_function("otfs_sum_rate/64x16/K4", |b| {
        b.iter(|| otfs_sum_rate(black_box(&rho), &channels, 1e-3, &p).unwrap())
    });
}

fn lmmse(c: &mut Criterion) {
    let mut group = c.benchmark_group("lmmse");
    group.sample_size(10);
    for (m, n) in [(16, 8), (32, 16)] {
        let p = params(m, n);
        let h = build_h_dd(&tdl_d_channels(&p, 1, 4).remove(0), &p);
        let y = DVector::from_column_slice(random_grid(m, n, 5).as_slice());
        let label = format!("{m}x{n}");
        group.bench_function(BenchmarkId::new("factor", &label), |b| {
            b.iter(|| LmmseDetector::new(black_box(&h), 0.01, 1.0).unwrap())
        });
        let det = LmmseDetector::new(&h, 0.01, 1.0).unwrap();
        group.bench_function(BenchmarkId::new("detect", &label), |b| {
            b.iter(|| det.detect(black_box(&y)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, channel_matrix, sum_rate, lmmse);
criterion_main!(benches);
