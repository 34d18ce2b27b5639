//! Benchmarks for the numerical hot paths: Hessian factorization and solves,
//! influence-matrix assembly, and a full Newton fit.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Array1;
use std::hint::black_box;
use strata_core::influence::influence_matrix;
use strata_core::linalg::factor_hessian;
use strata_core::model::{loss_hessian, train};
use strata_core::theory::{theorem_instance, theorem_train_cfg};

fn bench_hotpaths(c: &mut Criterion) {
    let cfg = theorem_train_cfg();
    let ds = theorem_instance(60, 1).unwrap();
    let fit = train(&ds, &cfg).unwrap();
    let h = loss_hessian(&ds, &fit.params).unwrap();
    let factor = factor_hessian(&h).unwrap();
    let v = Array1::linspace(-1.0, 1.0, h.nrows());

    c.bench_function("cholesky_factor_m", |b| {
        b.iter(|| factor_hessian(black_box(&h)).unwrap())
    });

    c.bench_function("cholesky_solve_m", |b| {
        b.iter(|| factor.solve(black_box(v.view())))
    });

    c.bench_function("influence_matrix_n60", |b| {
        b.iter(|| influence_matrix(black_box(&ds), black_box(&fit)).unwrap())
    });

    c.bench_function("newton_train_n60", |b| {
        b.iter_batched(
            || ds.clone(),
            |ds| train(black_box(&ds), &cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_hotpaths
}
criterion_main!(benches);
