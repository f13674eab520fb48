//! Verification suites. Each check returns a [`CriterionResult`]; the CLI
//! `verify` subcommand and the acceptance tests both print them.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::analysis::{convergence_report, variance_monotonicity_check};
use crate::data::{Dataset, Example, MixtureStore, SeededSampler, Stream, Target};
use crate::error::{GrapeError, Result};
use crate::experiment::{self, RunConfig};
use crate::gradient::GradientVector;
use crate::metrics::roi;
use crate::model::{finite_diff_check, CharLmModel, DifferentiableModel, QuadraticFamily, SoftmaxRegression};
use crate::reweight::{
    pcgrad_surgery, train_run, Algorithm, InitialState, OverheadCounter, ReweightConfig, ReweightKind,
};
use crate::scenarios::{multilingual_instance, prioritization_instance, theorem_instance, variance_instance};
use crate::simplex::{Direction, SimplexWeights, UpdateParams};
use crate::Execution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CriterionResult {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    /// Folds several results into one line that passes iff all do.
    pub fn combine(name: &str, parts: &[CriterionResult]) -> Self {
        let detail = parts
            .iter()
            .map(|p| format!("{} [{}]", p.detail, if p.passed { "ok" } else { "FAILED" }))
            .collect::<Vec<_>>()
            .join("; ");
        CriterionResult::new(name, parts.iter().all(|p| p.passed), detail)
    }
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{mark} {}: {}", self.name, self.detail)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Updates,
    Gradients,
    Theorem1,
    Theorem2,
    Overhead,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Updates,
        Suite::Gradients,
        Suite::Theorem1,
        Suite::Theorem2,
        Suite::Overhead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Updates => "updates",
            Suite::Gradients => "gradients",
            Suite::Theorem1 => "theorem1",
            Suite::Theorem2 => "theorem2",
            Suite::Overhead => "overhead",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| GrapeError::ConfigError(format!("unknown suite `{name}`")))
    }

    pub fn run(self) -> Result<Vec<CriterionResult>> {
        match self {
            Suite::Updates => Ok(vec![update_oracle(1000, 0)?]),
            Suite::Gradients => Ok(vec![gradient_contract(100, 0)?]),
            Suite::Theorem1 => theorem1(0),
            Suite::Theorem2 => theorem2(0),
            Suite::Overhead => Ok(vec![overhead_identity()?, overhead_closed_form(20, 0)?]),
        }
    }
}

/// Double-double exponential. `TwoFloat::exp` is only good to a few ulps of
/// f64, too coarse for an oracle, so this reduces by `ln 2` and by `2^8` and
/// sums the Taylor series.
fn dd_exp(x: TwoFloat) -> TwoFloat {
    const LN2_HI: f64 = std::f64::consts::LN_2;
    const LN2_LO: f64 = 2.319_046_813_846_299_6e-17;
    let k = (x.hi() / LN2_HI).round();
    let ln2 = TwoFloat::new_add(LN2_HI, LN2_LO);
    let r = (x - ln2 * k) / 256.0;
    let mut term = TwoFloat::from(1.0);
    let mut sum = TwoFloat::from(1.0);
    for i in 1..30 {
        term = term * r / i as f64;
        sum += term;
    }
    for _ in 0..8 {
        sum = sum * sum;
    }
    sum * 2f64.powi(k as i32)
}

/// `w_i·exp(±η s_i) / Σ_j w_j·exp(±η s_j)` in double-double arithmetic.
pub fn closed_form_update(w: &[f64], scores: &[f64], eta: f64, direction: Direction) -> Vec<f64> {
    let sign = match direction {
        Direction::Ascend => 1.0,
        Direction::Descend => -1.0,
    };
    let terms: Vec<TwoFloat> = w
        .iter()
        .zip(scores)
        .map(|(&wi, &s)| TwoFloat::from(wi) * dd_exp(TwoFloat::from(sign * eta) * TwoFloat::from(s)))
        .collect();
    let total = terms.iter().fold(TwoFloat::from(0.0), |acc, t| acc + *t);
    terms.iter().map(|t| f64::from(*t / total)).collect()
}

/// Random instances with up to eight entries compared against
/// [`closed_form_update`]; max relative error must stay within `1e-12`.
pub fn update_oracle(instances: usize, seed: u64) -> Result<CriterionResult> {
    let start = Instant::now();
    let mut sampler = SeededSampler::new(seed, Stream::Auxiliary);
    let rng = sampler.rng();
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let m = rng.random_range(1..=8);
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(1e-3..1.0)).collect();
        let w = SimplexWeights::normalize(&raw)?;
        let scores: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let eta = rng.random_range(0.0..5.0);
        let direction = if rng.random::<bool>() {
            Direction::Ascend
        } else {
            Direction::Descend
        };
        let got = w.multiplicative_update(&scores, UpdateParams::new(eta, direction)?)?;
        let want = closed_form_update(w.values(), &scores, eta, direction);
        for (g, e) in got.values().iter().zip(&want) {
            worst = worst.max((g - e).abs() / e.abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok(CriterionResult::new(
        "update-rule oracle",
        worst <= 1e-12 && elapsed < 1.0,
        format!("{instances} instances, max relative error {worst:.2e} (<= 1e-12), {elapsed:.3}s (< 1s)"),
    ))
}

fn random_token_batch<R: Rng + ?Sized>(vocab: usize, rng: &mut R) -> Vec<Example> {
    (0..rng.random_range(1..4))
        .map(|_| {
            Example::Tokens(
                (0..rng.random_range(2..12))
                    .map(|_| rng.random_range(0..vocab as u32))
                    .collect(),
            )
        })
        .collect()
}

fn random_feature_batch<R: Rng + ?Sized>(features: usize, classes: usize, rng: &mut R) -> Vec<Example> {
    (0..rng.random_range(1..5))
        .map(|i| {
            let x = (0..features).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = if i % 2 == 0 {
                Target::Scalar(rng.random_range(0..classes) as f64)
            } else {
                let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = raw.iter().sum();
                Target::Vector(raw.iter().map(|r| r / s).collect())
            };
            Example::Features { x, y }
        })
        .collect()
}

fn random_quadratic_batch<R: Rng + ?Sized>(tasks: usize, dim: usize, rng: &mut R) -> Vec<Example> {
    (0..rng.random_range(1..4))
        .map(|_| {
            let raw: Vec<f64> = (0..tasks).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum::<f64>().max(1e-12);
            Example::Quadratic {
                mix: raw.iter().map(|r| r / s).collect(),
                offset: (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect(),
            }
        })
        .collect()
}

/// Finite-difference agreement on every built-in model at random points.
pub fn gradient_contract(points: usize, seed: u64) -> Result<CriterionResult> {
    let mut sampler = SeededSampler::new(seed, Stream::Auxiliary);
    let rng = sampler.rng();
    let quadratic = QuadraticFamily::random(3, 4, 0.5, 2.0, 1.0, rng)?;
    let softmax = SoftmaxRegression::new(3, 4)?;
    let char_lm = CharLmModel::new(5)?;
    let mut report = Vec::new();
    let mut passed = true;
    for name in ["quadratic", "softmax", "char_lm"] {
        let mut worst = 0.0f64;
        for _ in 0..points {
            let (model, batch): (&dyn DifferentiableModel, Vec<Example>) = match name {
                "quadratic" => (&quadratic, random_quadratic_batch(3, 4, rng)),
                "softmax" => (&softmax, random_feature_batch(3, 4, rng)),
                _ => (&char_lm, random_token_batch(5, rng)),
            };
            let params: Vec<f64> = (0..model.param_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let refs: Vec<&Example> = batch.iter().collect();
            worst = worst.max(finite_diff_check(model, &params, &refs, 1e-5)?);
        }
        passed &= worst <= 1e-6;
        report.push(format!("{name} {worst:.1e}"));
    }
    Ok(CriterionResult::new(
        "gradient contract",
        passed,
        format!(
            "max finite-difference error over {points} points: {} (<= 1e-6)",
            report.join(", ")
        ),
    ))
}

/// Worst-task suboptimality of deterministic GRAPE on [`theorem_instance`].
pub fn theorem1(seed: u64) -> Result<Vec<CriterionResult>> {
    let start = Instant::now();
    let s = theorem_instance(seed)?;
    let out = train_run(&s.config, &s.family, &s.store, s.init.clone(), seed)?;
    let report = convergence_report(&out.trajectory, s.optimum.value)?;
    let elapsed = start.elapsed().as_secs_f64();
    let best = report.final_running_min();
    let slope = report.rate_fit.map(|f| f.slope);
    Ok(vec![
        CriterionResult::new(
            "theorem1 suboptimality",
            best <= 1e-3,
            format!(
                "running-min worst-task suboptimality {best:.3e} (<= 1e-3), minimax value {:.6}",
                s.optimum.value
            ),
        ),
        CriterionResult::new(
            "theorem1 rate",
            slope.is_some_and(|v| v <= -0.8),
            format!(
                "log-log slope over last half {} (<= -0.8), {} non-positive points skipped",
                slope.map_or("undefined".into(), |v| format!("{v:.3}")),
                report.skipped_in_fit
            ),
        ),
        CriterionResult::new("theorem1 runtime", elapsed < 30.0, format!("{elapsed:.2}s (< 30s)")),
    ])
}

/// Variance monotonicity of GRAPE on [`variance_instance`], with the uniform
/// baseline as a negative control.
pub fn theorem2(seed: u64) -> Result<Vec<CriterionResult>> {
    let s = variance_instance(seed)?;
    let grape = train_run(&s.config, &s.family, &s.store, s.init.clone(), seed)?;
    let check = variance_monotonicity_check(&grape.trajectory, 0.2)?;
    let uniform_cfg = ReweightConfig {
        algorithm: Algorithm::Uniform,
        ..s.config.clone()
    };
    let uniform = train_run(&uniform_cfg, &s.family, &s.store, s.init.clone(), seed)?;
    let control = variance_monotonicity_check(&uniform.trajectory, 0.2)?;
    Ok(vec![
        CriterionResult::new(
            "theorem2 grape",
            check.passed && check.max_increase_after_t0 <= crate::analysis::harness::VARIANCE_TOLERANCE,
            format!(
                "T_0 = {} (cap {}), largest post-T_0 increase {:.2e}",
                check.t0, check.cap, check.max_increase_after_t0
            ),
        ),
        CriterionResult::new(
            "theorem2 negative control",
            control.increases_after_cap >= 1,
            format!(
                "uniform baseline: {} variance increases after step {} (needs >= 1), largest {:.2e}",
                control.increases_after_cap, control.cap, control.max_increase_after_cap
            ),
        ),
    ])
}

/// A store of `k` quadratic domains and `n` tasks over one family.
fn counting_store(n: usize, k: usize, rng: &mut SeededSampler) -> Result<(QuadraticFamily, MixtureStore)> {
    let family = QuadraticFamily::random(n, 2, 0.5, 2.0, 1.0, rng.rng())?;
    let domains = (0..k)
        .map(|i| Dataset::new(format!("domain{i}"), random_quadratic_batch(n, 2, rng.rng())))
        .collect::<Result<Vec<_>>>()?;
    let tasks = (0..n)
        .map(|i| Dataset::new(format!("task{i}"), vec![family.task_example(i)]))
        .collect::<Result<Vec<_>>>()?;
    Ok((family, MixtureStore::new(domains, tasks)?))
}

fn counted_run(n: usize, k: usize, every: u64, steps: u64, seed: u64) -> Result<OverheadCounter> {
    let mut rng = SeededSampler::new(seed, Stream::Auxiliary);
    let (family, store) = counting_store(n, k, &mut rng)?;
    let cfg = ReweightConfig {
        update_every_alpha: every,
        update_every_z: every,
        total_steps: steps,
        lr: 0.05,
        eval_every: steps,
        ..ReweightConfig::default()
    };
    let init = InitialState::uniform(&family, &store)?;
    Ok(train_run(&cfg, &family, &store, init, seed)?.counter)
}

/// Six tasks, seven domains, updates every 100 of 1000 steps.
pub fn overhead_identity() -> Result<CriterionResult> {
    let c = counted_run(6, 7, 100, 1000, 0)?;
    Ok(CriterionResult::new(
        "overhead identity",
        c.reweight_evals() == 150 && c.train_grad_evals == 1000,
        format!(
            "{} reweight vs {} training gradient evaluations ({:.0}% overhead)",
            c.reweight_evals(),
            c.train_grad_evals,
            100.0 * c.overhead_ratio()
        ),
    ))
}

/// Measured counters against the closed form for random `(N, K, ΔT, T)`.
pub fn overhead_closed_form(tuples: usize, seed: u64) -> Result<CriterionResult> {
    let mut sampler = SeededSampler::new(seed, Stream::Auxiliary);
    let mut mismatches = Vec::new();
    for i in 0..tuples {
        let rng = sampler.rng();
        let n = rng.random_range(1..=8);
        let k = rng.random_range(1..=8);
        let every = rng.random_range(1..=60);
        let steps = rng.random_range(1..=400);
        let got = counted_run(n, k, every, steps, seed + i as u64)?;
        let want = OverheadCounter::expected_grape(n as u64, k as u64, every, every, steps);
        if got != want {
            mismatches.push(format!("(N={n}, K={k}, dT={every}, T={steps})"));
        }
    }
    Ok(CriterionResult::new(
        "overhead closed form",
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{tuples} random tuples match")
        } else {
            format!("mismatches: {}", mismatches.join(", "))
        },
    ))
}

/// Every recorded weight vector of a 5000-step GRAPE run lies on the simplex.
pub fn simplex_conservation(seed: u64) -> Result<CriterionResult> {
    let s = variance_instance(seed)?;
    let out = train_run(&s.config, &s.family, &s.store, s.init.clone(), seed)?;
    let mut worst = 0.0f64;
    let mut negative = 0;
    for r in &out.trajectory.records {
        for w in [&r.alpha, &r.z] {
            worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
            negative += w.iter().filter(|v| **v < 0.0).count();
        }
    }
    Ok(CriterionResult::new(
        "simplex conservation",
        worst <= 1e-9 && negative == 0 && s.config.total_steps == 5000,
        format!(
            "{} records over {} steps, max |sum - 1| {worst:.1e} (<= 1e-9), {negative} negative entries",
            out.trajectory.len(),
            s.config.total_steps
        ),
    ))
}

/// `|RoI − γ⟨∇log l, d⟩|` for one gradient step on `l(θ) = θ²/2` at `θ = 1`.
pub fn taylor_discrepancy(gamma: f64) -> f64 {
    let loss = |t: f64| 0.5 * t * t;
    let theta = 1.0;
    let grad = theta;
    let measured = roi(loss(theta), loss(theta - gamma * grad)).expect("positive loss");
    (measured - gamma * (grad / loss(theta)) * grad).abs()
}

pub fn taylor_scaling() -> CriterionResult {
    let gammas = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4];
    let pts: Vec<(f64, f64)> = gammas
        .iter()
        .map(|g: &f64| (g.ln(), taylor_discrepancy(*g).ln()))
        .collect();
    let slope = crate::analysis::least_squares(&pts).map_or(f64::NAN, |f| f.slope);
    let at = taylor_discrepancy(0.01);
    CriterionResult::new(
        "roi taylor scaling",
        (1.8..=2.2).contains(&slope) && (at - 1e-4).abs() <= 1e-6,
        format!("log-log slope {slope:.4} (in [1.8, 2.2]), discrepancy at 0.01 = {at:.6e} (1e-4 +- 1e-6)"),
    )
}

/// Task weight of the neglected task rises at each of the first ten task
/// updates.
pub fn prioritization() -> Result<CriterionResult> {
    let s = prioritization_instance()?;
    let out = train_run(&s.config, &s.family, &s.store, s.init.clone(), 0)?;
    let fire_steps: Vec<u64> = out
        .events
        .iter()
        .filter(|e| e.kind == ReweightKind::Task)
        .map(|e| e.step)
        .take(10)
        .collect();
    let mut series = vec![s.init.z.values()[1]];
    for step in &fire_steps {
        let rec = out
            .trajectory
            .records
            .iter()
            .find(|r| r.step == *step)
            .expect("fired steps are recorded");
        series.push(rec.z[1]);
    }
    let rising = series.windows(2).all(|w| w[1] > w[0]);
    Ok(CriterionResult::new(
        "dro prioritization",
        rising && fire_steps.len() == 10,
        format!(
            "z_2 over the first {} task updates: {}",
            fire_steps.len(),
            series
                .iter()
                .map(|v| format!("{v:.4}"))
                .collect::<Vec<_>>()
                .join(" -> ")
        ),
    ))
}

/// Surgery on random conflicting pairs removes the conflict; compatible
/// pairs are left untouched.
pub fn pcgrad_property(pairs: usize, seed: u64) -> Result<CriterionResult> {
    let mut sampler = SeededSampler::new(seed, Stream::PcGrad);
    let rng = sampler.rng();
    let mut worst_dot = f64::INFINITY;
    let mut changed = 0;
    let mut conflicting = 0;
    let mut compatible = 0;
    while conflicting < pairs || compatible < pairs {
        let dim = rng.random_range(2..8);
        let g: Vec<GradientVector> = (0..2)
            .map(|_| GradientVector((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let d = g[0].dot(&g[1])?;
        let (surgered, _) = pcgrad_surgery(&g, &[vec![1], vec![0]])?;
        if d < 0.0 && conflicting < pairs {
            conflicting += 1;
            worst_dot = worst_dot.min(surgered[0].dot(&g[1])?).min(surgered[1].dot(&g[0])?);
        } else if d >= 0.0 && compatible < pairs {
            compatible += 1;
            if surgered != g {
                changed += 1;
            }
        }
    }
    Ok(CriterionResult::new(
        "pcgrad property",
        worst_dot >= -1e-12 && changed == 0,
        format!("{pairs} conflicting pairs: min post-surgery dot {worst_dot:.2e} (>= -1e-12); {changed} of {pairs} compatible pairs changed"),
    ))
}

/// Per-seed target NLL of the three methods on the multilingual analog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultilingualOutcome {
    pub seed: u64,
    pub grape: Vec<f64>,
    pub uniform: Vec<f64>,
    pub doge: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn worst(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn multilingual_seed(seed: u64, execution: Execution) -> Result<MultilingualOutcome> {
    let mut nll = Vec::new();
    for algorithm in [Algorithm::Grape, Algorithm::Uniform, Algorithm::Doge] {
        let mut s = multilingual_instance(seed, algorithm)?;
        s.config.execution = execution;
        let out = train_run(&s.config, &s.model, &s.store, s.initial_state()?, seed)?;
        nll.push(s.target_nll(&out.params));
    }
    let doge = nll.pop().unwrap();
    let uniform = nll.pop().unwrap();
    let grape = nll.pop().unwrap();
    Ok(MultilingualOutcome {
        seed,
        grape,
        uniform,
        doge,
    })
}

/// Ten seeds on one thread: GRAPE's average target NLL against uniform
/// sampling, and its worst-target NLL against DoGE.
pub fn multilingual(seeds: u64) -> Result<(CriterionResult, Vec<MultilingualOutcome>)> {
    let start = Instant::now();
    let outcomes = (0..seeds)
        .map(|s| multilingual_seed(s, Execution::Sequential))
        .collect::<Result<Vec<_>>>()?;
    let elapsed = start.elapsed().as_secs_f64();
    let avg_wins = outcomes.iter().filter(|o| mean(&o.grape) <= mean(&o.uniform)).count();
    let worst_wins = outcomes.iter().filter(|o| worst(&o.grape) <= worst(&o.doge)).count();
    let need_avg = (seeds * 9).div_ceil(10) as usize;
    let need_worst = (seeds * 7).div_ceil(10) as usize;
    let result = CriterionResult::new(
        "multilingual analog",
        avg_wins >= need_avg && worst_wins >= need_worst && elapsed < 300.0,
        format!(
            "average NLL <= uniform in {avg_wins}/{seeds} seeds (>= {need_avg}), worst NLL <= DoGE in {worst_wins}/{seeds} (>= {need_worst}), {elapsed:.1}s (< 300s)"
        ),
    );
    Ok((result, outcomes))
}

/// Runs the same sampled configuration twice, and once more on the other
/// execution path, and compares the trajectory exports byte for byte.
pub fn determinism(dir: &Path) -> Result<CriterionResult> {
    let text = r#"
        seed = 11
        [training]
        algorithm = "grape"
        total_steps = 400
        update_every_alpha = 20
        update_every_z = 20
        train_batch_size = 4
        eval_batch_size = 8
        lr = 0.5
        [model]
        kind = "char_lm"
        vocab = 6
        [languages.a]
        [languages.b]
        sharpness = 3.0
        [[domains]]
        name = "a"
        source = "markov"
        language = "a"
        length = 2000
        [[domains]]
        name = "b"
        source = "markov"
        language = "b"
        length = 2000
        [[tasks]]
        name = "ab"
        source = "markov_mixture"
        components = [["a", 0.5], ["b", 0.5]]
        length = 500
        [[tasks]]
        name = "b_only"
        source = "markov"
        language = "b"
        length = 500
    "#;
    let mut exports = Vec::new();
    for (i, execution) in [Execution::Parallel, Execution::Parallel, Execution::Sequential]
        .into_iter()
        .enumerate()
    {
        let mut cfg = RunConfig::from_toml(text)?;
        cfg.out_dir = dir.join(format!("run{i}"));
        cfg.training.execution = execution;
        experiment::run(&cfg)?;
        let path = cfg.out_dir.join("trajectory.csv");
        exports.push(std::fs::read(&path).map_err(|e| GrapeError::io(&path, e))?);
    }
    let repeat = exports[0] == exports[1];
    let paths = exports[0] == exports[2];
    Ok(CriterionResult::new(
        "determinism",
        repeat && paths,
        format!(
            "repeat run identical: {repeat}; parallel vs sequential identical: {paths} ({} bytes)",
            exports[0].len()
        ),
    ))
}
