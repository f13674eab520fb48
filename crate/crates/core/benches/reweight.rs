use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use grape_core::data::{Dataset, MixtureStore, SeededSampler, Stream};
use grape_core::model::QuadraticFamily;
use grape_core::reweight::{train_run, Algorithm, InitialState, ReweightConfig};
use grape_core::scenarios::multilingual_instance;
use grape_core::Execution;
use std::hint::black_box;

const PATHS: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn multilingual(c: &mut Criterion) {
    let mut group = c.benchmark_group("multilingual_500_steps");
    group.sample_size(10);
    for (name, execution) in PATHS {
        let mut s = multilingual_instance(0, Algorithm::Grape).unwrap();
        s.config.total_steps = 500;
        s.config.update_every_alpha = 50;
        s.config.update_every_z = 50;
        s.config.eval_every = 500;
        s.config.execution = execution;
        let init = s.initial_state().unwrap();
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| train_run(&s.config, &s.model, &s.store, black_box(init.clone()), 0).unwrap())
        });
    }
    group.finish();
}

/// Many tasks in a high-dimensional quadratic family with reweighting at
/// every step, so the per-task gradient fan-out dominates.
fn wide_quadratic(c: &mut Criterion) {
    let tasks = 32;
    let mut rng = SeededSampler::new(0, Stream::Synthetic);
    let family = QuadraticFamily::random(tasks, 256, 0.5, 2.0, 1.0, rng.rng()).unwrap();
    let sets = |prefix: &str| {
        (0..tasks)
            .map(|n| Dataset::new(format!("{prefix}{n}"), vec![family.task_example(n)]).unwrap())
            .collect::<Vec<_>>()
    };
    let store = MixtureStore::new(sets("domain"), sets("task")).unwrap();
    let init = InitialState::uniform(&family, &store).unwrap();
    let mut group = c.benchmark_group("quadratic_32_tasks_dim_256");
    group.sample_size(10);
    for (name, execution) in PATHS {
        let cfg = ReweightConfig {
            algorithm: Algorithm::Grape,
            total_steps: 50,
            lr: 0.1,
            update_every_alpha: 1,
            update_every_z: 1,
            eval_every: 50,
            full_batch: true,
            execution,
            ..ReweightConfig::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| train_run(&cfg, &family, &store, black_box(init.clone()), 0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, multilingual, wide_quadratic);
criterion_main!(benches);
