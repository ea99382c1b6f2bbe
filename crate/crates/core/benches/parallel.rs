use criterion::{criterion_group, criterion_main, Criterion};
use slod_core::basis::{build_basis, BasisOptions, BasisParams};
use slod_core::mesh::{NestingMap, TensorGrid};
use slod_core::par::Execution;
use slod_core::solvers::{coarse_matrix, FineSystem};
use slod_core::velocity::VelocityField;

const EPSILON: f64 = 1.0 / 32.0;

fn setup() -> (NestingMap, VelocityField) {
    let nesting = NestingMap::new(TensorGrid::new(2, 8).unwrap(), TensorGrid::new(2, 64).unwrap()).unwrap();
    (nesting, VelocityField::constant(&[0.7f64.cos(), 0.7f64.sin()]))
}

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn basis(c: &mut Criterion) {
    let (nesting, b) = setup();
    let params = BasisParams {
        level: 2,
        ..Default::default()
    };
    let mut group = c.benchmark_group("build_basis");
    group.sample_size(10);
    for (name, execution) in modes() {
        let options = BasisOptions {
            execution,
            ..Default::default()
        };
        group.bench_function(name, |bench| {
            bench.iter(|| build_basis(&nesting, EPSILON, &b, &params, &options).unwrap())
        });
    }
    group.finish();
}

fn coarse_system(c: &mut Criterion) {
    let (nesting, b) = setup();
    let params = BasisParams {
        level: 2,
        ..Default::default()
    };
    let basis = build_basis(&nesting, EPSILON, &b, &params, &BasisOptions::default()).unwrap();
    let fine = FineSystem::new(*nesting.fine(), EPSILON, &b).unwrap();
    let mut group = c.benchmark_group("coarse_matrix");
    for (name, execution) in modes() {
        group.bench_function(name, |bench| bench.iter(|| coarse_matrix(&basis, &fine, execution).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, basis, coarse_system);
criterion_main!(benches);
