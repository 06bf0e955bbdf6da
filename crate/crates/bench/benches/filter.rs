use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ptcbf_core::verify::forced_override_scenario;
use ptcbf_core::*;

fn stack(c: &mut Criterion) {
    let clock = HorizonClock::new(0.0, 4.0, 1000.0).unwrap();
    for n in [2usize, 4, 6] {
        let x: Vec<f64> = (0..n)
            .map(|i| if i == 0 { -1.0 } else { 0.1 * i as f64 })
            .collect();
        let gains = GainVector(vec![1.0; n]);
        c.bench_function(&format!("barrier_stack/n={n}"), |b| {
            b.iter(|| barrier_stack(black_box(&x), black_box(3.9), &clock, &gains).unwrap())
        });
        c.bench_function(&format!("alpha_n_row/n={n}"), |b| {
            b.iter(|| alpha_n_row(n, black_box(3.9), &clock, &gains).unwrap())
        });
    }
}

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(20);
    let reference = Scenario::reference_double_integrator();
    group.bench_function("reference", |b| {
        b.iter(|| simulate(black_box(&reference)).unwrap())
    });
    let forced = forced_override_scenario(1e6);
    group.bench_function("forced_override", |b| {
        b.iter(|| simulate(black_box(&forced)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, stack, simulation);
criterion_main!(benches);
