use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fdxsim_core::power_allocation::solve;
use fdxsim_core::selftest::random_instance;
use fdxsim_core::simulation::{run_trial, ScenarioConfig};
use fdxsim_core::{munkres, Budgets, SinrMode};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bench_munkres(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [8usize, 32] {
        let v = Array2::from_shape_simple_fn((n, n), || rng.random_range(0.0..10.0));
        c.bench_function(&format!("munkres_{n}x{n}"), |b| b.iter(|| munkres(black_box(&v)).unwrap()));
    }
}

fn bench_solver(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (assignment, gains, bs, _) = random_instance(&mut rng, false).unwrap();
    let budgets = Budgets { pmax_coop: 0.1, pmax_nc: 0.1, rmin_coop: 0.1, rmin_nc: 0.1 };
    c.bench_function("solve_4x4_n8", |b| {
        b.iter(|| solve(black_box(&assignment), &gains, &bs, &budgets, SinrMode::Approximate).unwrap())
    });
}

fn bench_trial(c: &mut Criterion) {
    let config = ScenarioConfig::default();
    let mut t = 0u64;
    c.bench_function("trial_default", |b| {
        b.iter(|| {
            t += 1;
            run_trial(black_box(&config), t)
        })
    });
}

criterion_group!(benches, bench_munkres, bench_solver, bench_trial);
criterion_main!(benches);
