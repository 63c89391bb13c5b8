use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use shelab_bench::{quadratic_model, small_simulation, unit_interval};
use shelab_core::integrator::{euler_step, initial_profile, FieldState};
use shelab_core::lattice::{kernel_matrix, walk_kernel_table};
use shelab_core::{mc_drive, InitialProfile, NoiseSource, SolverConfig};

fn kernels(c: &mut Criterion) {
    let d = unit_interval(6);
    c.bench_function("kernel_matrix_65_sites", |b| {
        b.iter(|| kernel_matrix(black_box(0.05), &d).unwrap())
    });
    c.bench_function("walk_kernel_table_200", |b| {
        b.iter(|| walk_kernel_table(black_box(0.05), 1.0 / 64.0, 200).unwrap())
    });
}

fn noise(c: &mut Criterion) {
    let src = NoiseSource::new(7, 1.0 / 64.0, 1e-4, 0).unwrap();
    c.bench_function("noise_10k_draws", |b| {
        b.iter(|| (0..10_000u64).map(|k| src.site_increment(black_box(3), k)).sum::<f64>())
    });
}

fn stepping(c: &mut Criterion) {
    let d = unit_interval(6);
    let model = quadratic_model();
    let cfg = SolverConfig::euler(d.epsilon, 1.0);
    let noise = NoiseSource::new(7, d.epsilon, cfg.dt, 0)
        .unwrap()
        .coupled_view(&d)
        .unwrap();
    let u0 = initial_profile(&InitialProfile::Constant { value: 1.0 }, &d);
    c.bench_function("euler_step_65_sites", |b| {
        b.iter_batched_ref(
            || FieldState::new(u0.clone()),
            |s| euler_step(s, &d, &model, &noise, &cfg).unwrap(),
            criterion::BatchSize::SmallInput,
        )
    });
}

fn monte_carlo(c: &mut Criterion) {
    let exp = small_simulation(0.05);
    let mut g = c.benchmark_group("mc_drive");
    g.sample_size(10);
    g.bench_function("simulate_65_sites_8_replicas", |b| {
        b.iter(|| mc_drive(&exp, 0..8, 1).unwrap())
    });
    g.finish();
}

criterion_group!(benches, kernels, noise, stepping, monte_carlo);
criterion_main!(benches);
