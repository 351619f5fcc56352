use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ktori::bimodule::{build_embeddings, module_trace_numeric};
use ktori::elliott::elliott_matching_sum;
use ktori::field::skew_factorize;
use ktori::skewmat::even_subsets;
use ktori::{Backend, GaussianAtom, ModuleElement, Rational, Scalar, SkewMatrix, Subset};

fn random_rational(n: usize, seed: u64) -> SkewMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let upper = (0..n * (n - 1) / 2)
        .map(|_| Scalar::Rational(Rational::new(rng.random_range(-50i64..=50).into(), rng.random_range(1i64..=9).into())))
        .collect();
    SkewMatrix::from_upper(n, Backend::Rational, upper).unwrap()
}

fn pfaffian(c: &mut Criterion) {
    let mut group = c.benchmark_group("pfaffian");
    for n in [4, 8, 12] {
        let m = random_rational(n, n as u64);
        group.bench_with_input(BenchmarkId::new("rational", n), &m, |b, m| b.iter(|| m.pfaffian()));
    }
    for n in [4, 6, 8] {
        let m = SkewMatrix::symbolic(n, "t");
        group.bench_with_input(BenchmarkId::new("symbolic", n), &m, |b, m| b.iter(|| m.pfaffian()));
    }
    group.finish();
}

fn minors(c: &mut Criterion) {
    let mut group = c.benchmark_group("all_minors");
    for n in [6, 8, 10] {
        let m = random_rational(n, 100 + n as u64);
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| b.iter(|| m.all_pfaffian_minors()));
    }
    group.finish();
}

fn elliott(c: &mut Criterion) {
    let mut group = c.benchmark_group("matching_sum");
    for n in [4, 6, 8] {
        let m = SkewMatrix::symbolic(n, "t");
        let top: Subset = even_subsets(n).pop().unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &(m, top), |b, (m, s)| {
            b.iter(|| elliott_matching_sum(m, s).unwrap())
        });
    }
    group.finish();
}

fn module_trace(c: &mut Criterion) {
    let mut group = c.benchmark_group("module_trace");
    group.sample_size(10);
    let gamma = SkewMatrix::from_f64(&DMatrix::from_row_slice(2, 2, &[0.0, 0.618, -0.618, 0.0]))
        .unwrap()
        .with_split(1, 0)
        .unwrap();
    let t11 = skew_factorize(&gamma.to_f64().unwrap()).unwrap();
    let maps = build_embeddings(&gamma, &t11).unwrap();
    let f = ModuleElement::atom(GaussianAtom::unit(DVector::zeros(1), DVector::zeros(1), DMatrix::identity(1, 1), vec![]));
    for window in [4i64, 8, 12] {
        group.bench_with_input(BenchmarkId::new("p1", window), &window, |b, &w| {
            b.iter(|| module_trace_numeric(&f, &maps, w).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, pfaffian, minors, elliott, module_trace);
criterion_main!(benches);
