use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use neklab_bench::{dense_polynomial, desk, desk_context};
use neklab_core::normalform::{homological_generator, lie_transform, one_step, resonant_average};
use neklab_core::{Ambient, Polynomial};

fn bracket(c: &mut Criterion) {
    let mut group = c.benchmark_group("poisson_bracket");
    for degree in [3u16, 4, 5] {
        let amb = Ambient::new(2, 1);
        let p = dense_polynomial(amb, degree);
        let q = dense_polynomial(amb, degree).scale(0.5);
        group.bench_with_input(BenchmarkId::from_parameter(degree), &degree, |b, _| {
            b.iter(|| black_box(&p).poisson_bracket(black_box(&q)).unwrap())
        });
    }
    group.finish();
}

fn averaging(c: &mut Criterion) {
    let amb = Ambient::new(2, 1);
    let f = dense_polynomial(amb, 5);
    let w = [1.0, 2.0];
    let t = 2.0 * std::f64::consts::PI;
    c.bench_function("resonant_average/deg5", |b| b.iter(|| resonant_average(black_box(&f), &w, t).unwrap()));
    c.bench_function("homological_generator/deg5", |b| {
        b.iter(|| homological_generator(black_box(&f), &w, t).unwrap())
    });
    let phi = homological_generator(&f, &w, t).unwrap().scale(1e-2);
    let g = dense_polynomial(amb, 3);
    c.bench_function("lie_transform/deg3_by_deg5_cap7", |b| {
        b.iter(|| lie_transform(black_box(&g), black_box(&phi), 7).unwrap())
    });
}

fn step(c: &mut Criterion) {
    let spec = desk(1);
    let ctx = desk_context(&spec);
    let g = Polynomial::zero(spec.ambient);
    c.bench_function("one_step/desk", |b| {
        b.iter(|| one_step(&ctx, &g, black_box(&spec.f), &spec.lambda).unwrap())
    });
}

criterion_group!(benches, bracket, averaging, step);
criterion_main!(benches);
