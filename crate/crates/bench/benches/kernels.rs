use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use isospec::billiards::{enumerate_orbits, length_spectrum};
use isospec::eigensolver::compute_spectrum;
use isospec::heat_trace::fit_invariants;
use isospec::inverse::solve_from_h;
use isospec::wave_trace::{probe, scan_peaks};
use isospec::{BoundaryCondition, OrbitCatalog};
use isospec_bench::{reference_trapezoid, square_spectrum};

fn geometry(c: &mut Criterion) {
    let t = reference_trapezoid();
    c.bench_function("orbit_catalog", |b| b.iter(|| OrbitCatalog::new(black_box(&t))));
    let (a, l, q, h) = (t.area(), t.perimeter(), t.angle_invariant().q, t.height());
    c.bench_function("solve_from_h", |b| b.iter(|| solve_from_h(black_box(a), l, q, h)));
}

fn billiards(c: &mut Criterion) {
    let t = reference_trapezoid();
    let p = t.vertices();
    let mut g = c.benchmark_group("billiards");
    for lmax in [4.0, 6.0, 8.0] {
        g.bench_with_input(BenchmarkId::new("enumerate", lmax), &lmax, |b, &l| b.iter(|| enumerate_orbits(&p, l, 10)));
        g.bench_with_input(BenchmarkId::new("length_spectrum", lmax), &lmax, |b, &l| b.iter(|| length_spectrum(&t, l)));
    }
    g.finish();
}

fn eigensolver(c: &mut Criterion) {
    let p = reference_trapezoid().vertices();
    let mut g = c.benchmark_group("eigensolver");
    g.sample_size(10);
    for h in [0.08, 0.04] {
        g.bench_with_input(BenchmarkId::new("dirichlet_50", h), &h, |b, &h| {
            b.iter(|| compute_spectrum(&p, BoundaryCondition::Dirichlet, 50, h, 2))
        });
    }
    g.finish();
}

fn traces(c: &mut Criterion) {
    let s = square_spectrum(5000);
    c.bench_function("heat_fit_5000", |b| b.iter(|| fit_invariants(black_box(&s), None, 64)));
    let ks: Vec<f64> = (0..256).map(|i| 10.0 + 0.25 * i as f64).collect();
    c.bench_function("probe_256", |b| b.iter(|| probe(black_box(&s), 2.0, 0.15, &ks)));
    let mut g = c.benchmark_group("wave");
    g.sample_size(10);
    g.bench_function("scan_1_to_4", |b| b.iter(|| scan_peaks(black_box(&s), (1.0, 4.0), 0.15, 60.0, 5.0)));
    g.finish();
}

criterion_group!(benches, geometry, billiards, eigensolver, traces);
criterion_main!(benches);
