use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use steingmm::models::gamma_two_param_model;
use steingmm::moments::blocks_with;
use steingmm::numerics::rng::{sample_gamma, RngStream};
use steingmm::simulation::{run_simulation_with, SimulationConfig};
use steingmm::weights::power_weight;
use steingmm::Execution;

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn bench_simulation(c: &mut Criterion) {
    let mut config = SimulationConfig::figure1(1);
    config.replications = 64;
    let mut group = c.benchmark_group("figure1_64_reps");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_simulation_with(black_box(&config), exec).unwrap())
        });
    }
    group.finish();
}

fn bench_blocks(c: &mut Criterion) {
    let mut rng = RngStream::new(7, 0);
    let sample = sample_gamma(&mut rng, 5.0, 1.0, 1 << 20).unwrap();
    let model = gamma_two_param_model();
    let weight = power_weight(1.5).unwrap();
    let mut group = c.benchmark_group("moment_blocks_1M");
    group.sample_size(20);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| blocks_with(&model, &weight, black_box(&sample), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_simulation, bench_blocks);
criterion_main!(benches);
