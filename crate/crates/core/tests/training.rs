use grape_core::data::{Dataset, Example, MixtureStore};
use grape_core::model::QuadraticFamily;
use grape_core::reweight::{train_run, Algorithm, InitialState, OverheadCounter, ReweightConfig, ReweightKind};
use grape_core::scenarios::theorem_instance;

fn noisy_domain(name: &str, mix: Vec<f64>, offsets: &[[f64; 2]]) -> Dataset {
    let examples = offsets
        .iter()
        .map(|o| Example::Quadratic {
            mix: mix.clone(),
            offset: o.to_vec(),
        })
        .collect();
    Dataset::new(name, examples).unwrap()
}

fn single_task_setup() -> (QuadraticFamily, MixtureStore) {
    let family = QuadraticFamily::new(vec![vec![1.0, 2.0]], vec![vec![1.0, -1.0]]).unwrap();
    let domains = vec![
        noisy_domain("near", vec![1.0], &[[0.1, 0.0], [-0.1, 0.2], [0.0, -0.2]]),
        noisy_domain("far", vec![1.0], &[[2.0, 1.0], [1.5, 0.5], [2.5, 1.5]]),
    ];
    let tasks = vec![Dataset::new("only", vec![family.task_example(0)]).unwrap()];
    (family, MixtureStore::new(domains, tasks).unwrap())
}

fn stochastic_config(algorithm: Algorithm) -> ReweightConfig {
    ReweightConfig {
        algorithm,
        total_steps: 120,
        lr: 0.1,
        update_every_alpha: 5,
        update_every_z: 5,
        train_batch_size: 2,
        eval_batch_size: Some(2),
        eval_every: 5,
        ..ReweightConfig::default()
    }
}

#[test]
fn single_task_grape_reproduces_doge() {
    let (family, store) = single_task_setup();
    let init = InitialState::uniform(&family, &store).unwrap();
    let grape = train_run(&stochastic_config(Algorithm::Grape), &family, &store, init.clone(), 3).unwrap();
    let doge = train_run(&stochastic_config(Algorithm::Doge), &family, &store, init, 3).unwrap();
    assert_eq!(grape.params, doge.params);
    assert_eq!(grape.alpha, doge.alpha);
    let alphas = |o: &grape_core::reweight::TrainOutcome| -> Vec<Vec<f64>> {
        o.trajectory.records.iter().map(|r| r.alpha.clone()).collect()
    };
    assert_eq!(alphas(&grape), alphas(&doge));
    // the near domain should win weight
    assert!(grape.alpha.values()[0] > 0.5);
}

#[test]
fn reweighting_scores_post_update_parameters() {
    let mut s = theorem_instance(2).unwrap();
    s.config.total_steps = 60;
    s.config.update_every_z = 4;
    s.config.update_every_alpha = 6;
    let out = train_run(&s.config, &s.family, &s.store, s.init.clone(), 2).unwrap();
    for e in &out.events {
        assert_eq!(e.param_version, e.step);
    }
    let z_steps: Vec<u64> = out
        .events
        .iter()
        .filter(|e| e.kind == ReweightKind::Task)
        .map(|e| e.step)
        .collect();
    let a_steps: Vec<u64> = out
        .events
        .iter()
        .filter(|e| e.kind == ReweightKind::Domain)
        .map(|e| e.step)
        .collect();
    assert_eq!(z_steps, (1..=15).map(|i| 4 * i).collect::<Vec<_>>());
    assert_eq!(a_steps, (1..=10).map(|i| 6 * i).collect::<Vec<_>>());
    // at shared steps the task update comes first
    for pair in out.events.windows(2) {
        if pair[0].step == pair[1].step {
            assert_eq!(pair[0].kind, ReweightKind::Task);
            assert_eq!(pair[1].kind, ReweightKind::Domain);
        }
    }
}

#[test]
fn counters_match_closed_form_for_every_algorithm() {
    let (family, store) = single_task_setup();
    let init = InitialState::uniform(&family, &store).unwrap();
    for algorithm in [Algorithm::Grape, Algorithm::GrapeGap, Algorithm::GrapeEma] {
        let mut cfg = stochastic_config(algorithm);
        cfg.update_every_z = 7;
        cfg.update_every_alpha = 11;
        let out = train_run(&cfg, &family, &store, init.clone(), 0).unwrap();
        assert_eq!(
            out.counter,
            OverheadCounter::expected_grape(1, 2, 7, 11, 120),
            "{algorithm:?}"
        );
    }
    let out = train_run(&stochastic_config(Algorithm::Uniform), &family, &store, init.clone(), 0).unwrap();
    assert_eq!(out.counter.reweight_evals(), 0);
    assert_eq!(out.counter.train_grad_evals, 120);
    let out = train_run(&stochastic_config(Algorithm::Doge), &family, &store, init, 0).unwrap();
    assert_eq!(out.counter.task_grad_evals, 0);
    assert_eq!(out.counter.domain_grad_evals, 24 * 3);
}

#[test]
fn baselines_keep_frozen_weights_uniform() {
    let s = theorem_instance(4).unwrap();
    let mut cfg = s.config.clone();
    cfg.total_steps = 50;
    for algorithm in [Algorithm::Uniform, Algorithm::Doge, Algorithm::DogePcgrad] {
        cfg.algorithm = algorithm;
        let out = train_run(&cfg, &s.family, &s.store, s.init.clone(), 0).unwrap();
        for r in &out.trajectory.records {
            assert!(r.z.iter().all(|v| *v == 1.0 / 3.0), "{algorithm:?}");
            if algorithm == Algorithm::Uniform {
                assert!(r.alpha.iter().all(|v| *v == 1.0 / 3.0));
            }
        }
    }
}

#[test]
fn same_seed_same_run_different_seed_different_run() {
    let (family, store) = single_task_setup();
    let init = InitialState::uniform(&family, &store).unwrap();
    let cfg = stochastic_config(Algorithm::Grape);
    let a = train_run(&cfg, &family, &store, init.clone(), 9).unwrap();
    let b = train_run(&cfg, &family, &store, init.clone(), 9).unwrap();
    let c = train_run(&cfg, &family, &store, init, 10).unwrap();
    assert_eq!(a.trajectory, b.trajectory);
    assert_ne!(a.params, c.params);
}
