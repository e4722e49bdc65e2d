use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use undelay::dynamics::two_step_rhs_with;
use undelay::gains::second_step_gains;
use undelay::integrator::step_once;
use undelay::{freq, Complex64, GainVector, Method, ObserverState};
use undelay_bench::short_scenario;

fn gain_map(c: &mut Criterion) {
    let k = GainVector::new(vec![4.0, 6.0, 4.0, 1.0]).unwrap();
    c.bench_function("second_step_gains n=4", |b| {
        b.iter(|| second_step_gains(black_box(&k), black_box(0.01), black_box(0.5)).unwrap())
    });
}

fn rhs_and_step(c: &mut Criterion) {
    let scenario = short_scenario();
    let gains = scenario.differentiator.injection_gains(0.05).unwrap();

    let state = ObserverState::zeros(4);
    c.bench_function("two_step_rhs n=4", |b| {
        b.iter(|| two_step_rhs_with(black_box(&state), black_box(0.3), black_box(&gains)))
    });

    let y = vec![0.0; 8];
    let mut rhs = |_t: f64, y: &[f64]| {
        let s = ObserverState::from_flat(4, y);
        Ok(two_step_rhs_with(&s, 0.3, &gains).to_flat())
    };
    c.bench_function("rk4 step n=4", |b| {
        b.iter(|| step_once(black_box(&y), 0.0, 1e-3, Method::Rk4, &mut rhs).unwrap())
    });
}

fn oracle(c: &mut Criterion) {
    let k = GainVector::new(vec![4.0, 6.0, 4.0, 1.0]).unwrap();
    let grid = freq::log_grid(1e-2, 1e3, 200).unwrap();
    c.bench_function("stage2_tf 200-point grid", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for &w in &grid {
                let s = Complex64::new(0.0, w);
                acc += freq::stage2_tf(2, s, black_box(&k), 0.01, 0.5)
                    .unwrap()
                    .norm();
            }
            acc
        })
    });
}

fn short_run(c: &mut Criterion) {
    let scenario = short_scenario();
    c.bench_function("integrate 2000 steps n=4", |b| {
        b.iter(|| scenario.run().unwrap())
    });
}

criterion_group!(benches, gain_map, rhs_and_step, oracle, short_run);
criterion_main!(benches);
