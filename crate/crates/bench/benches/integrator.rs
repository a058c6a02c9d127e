use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use neklab_bench::desk;
use neklab_core::integrator::MidpointStepper;

fn midpoint(c: &mut Criterion) {
    let mut group = c.benchmark_group("midpoint_step");
    for big_n in [1usize, 4, 16] {
        let spec = desk(big_n);
        let dim = spec.ambient.nvars();
        let mut stepper = MidpointStepper::new(&spec);
        let mut y: Vec<f64> = (0..dim).map(|i| 0.2 + 0.01 * i as f64).collect();
        group.bench_with_input(BenchmarkId::new("desk_N", big_n), &big_n, |b, _| {
            b.iter(|| stepper.step_in_place(black_box(&mut y), 0.05).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, midpoint);
criterion_main!(benches);
