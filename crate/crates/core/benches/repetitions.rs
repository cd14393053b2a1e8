use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lipbandit::adversary::AttackKind;
use lipbandit::harness::{run_experiment_with, Algo, Execution, ExperimentConfig};

fn repetitions(c: &mut Criterion) {
    let mut group = c.benchmark_group("repetitions");
    group.sample_size(10);
    for algo in [Algo::Zooming, Algo::Rmel, Algo::Bob] {
        let cfg = ExperimentConfig {
            algo,
            attack: AttackKind::Oracle,
            budget: 300.0,
            horizon: 5000,
            reps: 8,
            ..Default::default()
        };
        group.bench_with_input(BenchmarkId::new("sequential", algo.name()), &cfg, |b, cfg| {
            b.iter(|| run_experiment_with(cfg, Execution::Sequential).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", algo.name()), &cfg, |b, cfg| {
            b.iter(|| run_experiment_with(cfg, Execution::Parallel).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, repetitions);
criterion_main!(benches);
