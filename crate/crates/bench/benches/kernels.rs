//! Benchmarks for the hot kernels: norms, factorization, alignment, and the
//! full decomposition evaluation.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use perturb_core::decomposition::{decompose, PerturbationInstance, Side, Variant};
use perturb_core::matrix::{spectral_norm, svd, two_to_inf_norm, DenseMatrix};
use perturb_core::models::{gen_gaussian_noise, gen_low_rank, SeededStream};
use perturb_core::procrustes::align;
use perturb_core::subspace::random_orthonormal;

fn instance(p1: usize, p2: usize, r: usize) -> PerturbationInstance {
    let mut s = SeededStream::new(7);
    let sigmas: Vec<f64> = (0..r).map(|i| 10.0 + (r - 1 - i) as f64).collect();
    let (x, _, _) = gen_low_rank(p1, p2, r, &sigmas, &mut s).unwrap();
    let raw = gen_gaussian_noise(p1, p2, &mut s).unwrap();
    let e = DenseMatrix::from_dmatrix(
        raw.as_dmatrix() * (1.0 / spectral_norm(raw.as_dmatrix())),
    )
    .unwrap();
    PerturbationInstance::new(x, e, r).unwrap()
}

fn bench_norms(c: &mut Criterion) {
    let mut group = c.benchmark_group("norms");
    for &n in &[50usize, 200, 800] {
        let mut s = SeededStream::new(1);
        let a = gen_gaussian_noise(n, n, &mut s).unwrap();
        group.bench_with_input(BenchmarkId::new("two_to_inf", n), &a, |b, a| {
            b.iter(|| two_to_inf_norm(std::hint::black_box(a.as_dmatrix())))
        });
        group.bench_with_input(BenchmarkId::new("spectral", n), &a, |b, a| {
            b.iter(|| spectral_norm(std::hint::black_box(a.as_dmatrix())))
        });
    }
    group.finish();
}

fn bench_svd(c: &mut Criterion) {
    let mut group = c.benchmark_group("svd");
    group.sample_size(20);
    for &n in &[50usize, 150] {
        let mut s = SeededStream::new(2);
        let a = gen_gaussian_noise(n, (n * 3) / 4, &mut s).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &a, |b, a| {
            b.iter(|| svd(std::hint::black_box(a)).unwrap())
        });
    }
    group.finish();
}

fn bench_align(c: &mut Criterion) {
    let mut group = c.benchmark_group("align");
    for &(p, r) in &[(200usize, 5usize), (800, 10)] {
        let mut s = SeededStream::new(3);
        let u = random_orthonormal(p, r, &mut s).unwrap();
        let uhat = random_orthonormal(p, r, &mut s).unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("p{p}_r{r}")),
            &(u, uhat),
            |b, (u, uhat)| b.iter(|| align(u, uhat).unwrap()),
        );
    }
    group.finish();
}

fn bench_decompose(c: &mut Criterion) {
    let mut group = c.benchmark_group("decompose");
    group.sample_size(20);
    for &(p1, p2, r) in &[(60usize, 40usize, 3usize), (200, 150, 5)] {
        let inst = instance(p1, p2, r);
        // Warm the factorization cache so the identity evaluation itself is
        // what gets measured.
        decompose(&inst, Variant::Rect4, Side::Left).unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{p1}x{p2}_r{r}")),
            &inst,
            |b, inst| b.iter(|| decompose(inst, Variant::Rect4, Side::Left).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_norms, bench_svd, bench_align, bench_decompose);
criterion_main!(benches);
