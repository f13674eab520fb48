//! Experiment configuration files and end-to-end runs.
//!
//! A run is described by a TOML file:
//!
//! ```toml
//! seed = 7
//! out_dir = "runs/grape"
//!
//! [training]
//! algorithm = "grape"
//! total_steps = 2000
//!
//! [model]
//! kind = "char_lm"
//! vocab = 8
//!
//! [languages.a]
//! sharpness = 3.0
//!
//! [[domains]]
//! name = "a"
//! source = "markov"
//! language = "a"
//!
//! [[tasks]]
//! name = "t"
//! source = "markov_mixture"
//! components = [["a", 1.0]]
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_markov_corpus, ingest_dataset, windows, Dataset, Example, MarkovLanguageSpec, MixtureStore, Record,
    SeededSampler, Stream,
};
use crate::error::{GrapeError, Result};
use crate::model::{CharLmModel, DifferentiableModel, QuadraticFamily, SoftmaxRegression};
use crate::reweight::{train_run, Algorithm, InitialState, ReweightConfig, TrainOutcome};
use crate::simplex::SimplexWeights;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Diagonal quadratic tasks. Give `curvatures` and `optima` explicitly,
    /// or let them be drawn from the seed with the remaining fields.
    Quadratic {
        curvatures: Option<Vec<Vec<f64>>>,
        optima: Option<Vec<Vec<f64>>>,
        /// Number of quadratic tasks; defaults to the number of `[[tasks]]`.
        tasks: Option<usize>,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_mu")]
        mu: f64,
        #[serde(default = "default_smoothness")]
        smoothness: f64,
        #[serde(default = "default_scale")]
        scale: f64,
        init: Option<Vec<f64>>,
    },
    Softmax {
        features: usize,
        classes: usize,
        init: Option<Vec<f64>>,
    },
    /// Bigram character model. Text files are mapped through `alphabet`;
    /// synthetic corpora use token ids directly and need only `vocab`.
    CharLm {
        vocab: Option<usize>,
        alphabet: Option<String>,
        init: Option<Vec<f64>>,
    },
}

fn default_dim() -> usize {
    2
}
fn default_mu() -> f64 {
    0.5
}
fn default_smoothness() -> f64 {
    2.0
}
fn default_scale() -> f64 {
    1.0
}
fn default_length() -> usize {
    10_000
}
fn default_window() -> usize {
    16
}
fn default_sharpness() -> f64 {
    2.0
}
fn default_quadratic_size() -> usize {
    1
}

/// A Markov language referenced by name from sources.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSpec {
    /// Explicit row-stochastic transition matrix.
    pub transitions: Option<Vec<Vec<f64>>>,
    /// Logit scale of a randomly drawn language.
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    File {
        name: String,
        path: PathBuf,
        #[serde(default = "default_window")]
        window: usize,
    },
    Markov {
        name: String,
        language: String,
        #[serde(default = "default_length")]
        length: usize,
        #[serde(default = "default_window")]
        window: usize,
    },
    MarkovMixture {
        name: String,
        components: Vec<(String, f64)>,
        #[serde(default = "default_length")]
        length: usize,
        #[serde(default = "default_window")]
        window: usize,
    },
    /// Draws from a quadratic model: `mix` weights the quadratic tasks and
    /// each example shifts the optimum by Gaussian noise of scale `noise`.
    Quadratic {
        name: String,
        mix: Vec<f64>,
        #[serde(default)]
        noise: f64,
        #[serde(default = "default_quadratic_size")]
        size: usize,
    },
}

impl SourceSpec {
    pub fn name(&self) -> &str {
        match self {
            SourceSpec::File { name, .. }
            | SourceSpec::Markov { name, .. }
            | SourceSpec::MarkovMixture { name, .. }
            | SourceSpec::Quadratic { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Optional JSON files with starting weights.
    pub init_alpha: Option<PathBuf>,
    pub init_z: Option<PathBuf>,
    #[serde(default)]
    pub training: ReweightConfig,
    pub model: ModelSpec,
    #[serde(default)]
    pub languages: BTreeMap<String, LanguageSpec>,
    pub domains: Vec<SourceSpec>,
    pub tasks: Vec<SourceSpec>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Reads, resolves, and validates a run configuration.
/// A model and, when the config pins them, its initial parameters.
pub type BuiltModel = (Box<dyn DifferentiableModel>, Option<Vec<f64>>);

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| GrapeError::io(path, e))?;
    let mut cfg: RunConfig =
        toml::from_str(&text).map_err(|e| GrapeError::ConfigError(format!("{}: {}", path.display(), e.message())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    cfg.resolve_paths(base);
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| GrapeError::ConfigError(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        self.init_alpha.iter_mut().for_each(fix);
        self.init_z.iter_mut().for_each(fix);
        for s in self.domains.iter_mut().chain(&mut self.tasks) {
            if let SourceSpec::File { path, .. } = s {
                fix(path);
            }
        }
    }

    /// Command-line overrides of scalar fields.
    pub fn apply_overrides(&mut self, seed: Option<u64>, out_dir: Option<PathBuf>, algorithm: Option<Algorithm>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out_dir {
            self.out_dir = o;
        }
        if let Some(a) = algorithm {
            self.training.algorithm = a;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if self.domains.is_empty() || self.tasks.is_empty() {
            return Err(GrapeError::ConfigError(
                "`domains`/`tasks`: need at least one of each".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for s in self.domains.iter().chain(&self.tasks) {
            let name = s.name();
            if name.is_empty() || name.contains([',', '"', '\n', '\r']) {
                return Err(GrapeError::ConfigError(format!(
                    "`name`: `{name}` must be non-empty without commas, quotes or newlines"
                )));
            }
            if !seen.insert(name) {
                return Err(GrapeError::ConfigError(format!("`name`: duplicate label `{name}`")));
            }
            match s {
                SourceSpec::Markov {
                    language,
                    window,
                    length,
                    ..
                } => {
                    self.language(language)?;
                    check_window(*window, *length)?;
                }
                SourceSpec::MarkovMixture {
                    components,
                    window,
                    length,
                    ..
                } => {
                    if components.is_empty() {
                        return Err(GrapeError::ConfigError("`components`: must not be empty".into()));
                    }
                    for (lang, w) in components {
                        self.language(lang)?;
                        if !(w.is_finite() && *w >= 0.0) {
                            return Err(GrapeError::ConfigError(format!("`components`: bad weight {w}")));
                        }
                    }
                    check_window(*window, *length)?;
                }
                SourceSpec::File { window, .. } => check_window(*window, 2)?,
                SourceSpec::Quadratic { mix, noise, size, .. } => {
                    if mix.iter().any(|m| !(m.is_finite() && *m >= 0.0)) || mix.iter().sum::<f64>() <= 0.0 {
                        return Err(GrapeError::ConfigError(
                            "`mix`: weights must be non-negative, not all zero".into(),
                        ));
                    }
                    if !(noise.is_finite() && *noise >= 0.0) {
                        return Err(GrapeError::ConfigError(format!("`noise`: must be >= 0, got {noise}")));
                    }
                    if *size == 0 {
                        return Err(GrapeError::ConfigError("`size`: must be at least 1".into()));
                    }
                }
            }
        }
        let needs_vocab = self
            .domains
            .iter()
            .chain(&self.tasks)
            .any(|s| matches!(s, SourceSpec::Markov { .. } | SourceSpec::MarkovMixture { .. }));
        if needs_vocab && self.vocab().is_none() {
            return Err(GrapeError::ConfigError(
                "`model`: Markov sources need a char_lm model with `vocab`".into(),
            ));
        }
        Ok(())
    }

    fn language(&self, name: &str) -> Result<&LanguageSpec> {
        self.languages
            .get(name)
            .ok_or_else(|| GrapeError::ConfigError(format!("`language`: unknown language `{name}`")))
    }

    fn vocab(&self) -> Option<usize> {
        match &self.model {
            ModelSpec::CharLm { vocab, alphabet, .. } => vocab.or(alphabet.as_ref().map(|a| a.chars().count())),
            _ => None,
        }
    }

    fn num_quadratic_tasks(&self) -> usize {
        match &self.model {
            ModelSpec::Quadratic {
                curvatures: Some(c), ..
            } => c.len(),
            ModelSpec::Quadratic { tasks: Some(n), .. } => *n,
            _ => self.tasks.len(),
        }
    }

    /// Builds the model with its initial parameters.
    pub fn build_model(&self) -> Result<BuiltModel> {
        let mut rng = SeededSampler::with_stream_id(self.seed, (Stream::Auxiliary as u64) << 32);
        Ok(match &self.model {
            ModelSpec::Quadratic {
                curvatures,
                optima,
                dim,
                mu,
                smoothness,
                scale,
                init,
                ..
            } => {
                let family = match (curvatures, optima) {
                    (Some(c), Some(o)) => QuadraticFamily::new(c.clone(), o.clone())?,
                    (None, None) => {
                        QuadraticFamily::random(self.num_quadratic_tasks(), *dim, *mu, *smoothness, *scale, rng.rng())?
                    }
                    _ => {
                        return Err(GrapeError::ConfigError(
                            "`model`: give both `curvatures` and `optima` or neither".into(),
                        ))
                    }
                };
                (Box::new(family), init.clone())
            }
            ModelSpec::Softmax {
                features,
                classes,
                init,
            } => (Box::new(SoftmaxRegression::new(*features, *classes)?), init.clone()),
            ModelSpec::CharLm { init, .. } => {
                let vocab = self
                    .vocab()
                    .ok_or_else(|| GrapeError::ConfigError("`model`: char_lm needs `vocab` or `alphabet`".into()))?;
                (Box::new(CharLmModel::new(vocab)?), init.clone())
            }
        })
    }

    fn build_languages(&self) -> Result<HashMap<&str, MarkovLanguageSpec>> {
        let Some(vocab) = self.vocab() else {
            return Ok(HashMap::new());
        };
        let mut out = HashMap::new();
        for (i, (name, spec)) in self.languages.iter().enumerate() {
            let lang = match &spec.transitions {
                Some(t) => MarkovLanguageSpec::new(t.clone())?,
                None => {
                    let mut rng =
                        SeededSampler::with_stream_id(self.seed, ((Stream::Auxiliary as u64) << 32) | (i as u64 + 1));
                    MarkovLanguageSpec::random(vocab, spec.sharpness, rng.rng())?
                }
            };
            if lang.vocab() != vocab {
                return Err(GrapeError::ConfigError(format!(
                    "`languages.{name}`: vocabulary {} differs from the model's {vocab}",
                    lang.vocab()
                )));
            }
            out.insert(name.as_str(), lang);
        }
        Ok(out)
    }

    fn build_dataset(
        &self,
        source: &SourceSpec,
        stream: u64,
        languages: &HashMap<&str, MarkovLanguageSpec>,
    ) -> Result<Dataset> {
        let mut rng = SeededSampler::with_stream_id(self.seed, ((Stream::Synthetic as u64) << 32) | stream);
        let examples = match source {
            SourceSpec::File { path, window, .. } => {
                let records = ingest_dataset(path)?;
                self.file_examples(path, &records, *window)?
            }
            SourceSpec::Markov {
                language,
                length,
                window,
                ..
            } => {
                let tokens = generate_markov_corpus(&languages[language.as_str()], *length, rng.rng())?;
                windows(&tokens, *window)
            }
            SourceSpec::MarkovMixture {
                components,
                length,
                window,
                ..
            } => {
                let parts: Vec<(f64, &MarkovLanguageSpec)> =
                    components.iter().map(|(l, w)| (*w, &languages[l.as_str()])).collect();
                let mixed = MarkovLanguageSpec::mixture(&parts)?;
                let tokens = generate_markov_corpus(&mixed, *length, rng.rng())?;
                windows(&tokens, *window)
            }
            SourceSpec::Quadratic { mix, noise, size, .. } => {
                let (tasks, dim) = match &self.model {
                    ModelSpec::Quadratic {
                        curvatures: Some(c), ..
                    } => (c.len(), c[0].len()),
                    ModelSpec::Quadratic { dim, .. } => (self.num_quadratic_tasks(), *dim),
                    _ => {
                        return Err(GrapeError::ConfigError(
                            "`source`: quadratic sources need a quadratic model".into(),
                        ))
                    }
                };
                if mix.len() != tasks {
                    return Err(GrapeError::ConfigError(format!(
                        "`mix`: {} entries for {tasks} quadratic tasks",
                        mix.len()
                    )));
                }
                let total: f64 = mix.iter().sum();
                let mix: Vec<f64> = mix.iter().map(|m| m / total).collect();
                let normal =
                    rand_distr::Normal::new(0.0, *noise).map_err(|e| GrapeError::ConfigError(e.to_string()))?;
                (0..*size)
                    .map(|_| Example::Quadratic {
                        mix: mix.clone(),
                        offset: (0..dim)
                            .map(|_| rand_distr::Distribution::sample(&normal, rng.rng()))
                            .collect(),
                    })
                    .collect()
            }
        };
        Dataset::new(source.name(), examples).map_err(|e| match (e, source) {
            (GrapeError::EmptyDataset(_), SourceSpec::File { path, .. }) => {
                GrapeError::EmptyDataset(Some(path.clone()))
            }
            (e, _) => e,
        })
    }

    fn file_examples(&self, path: &Path, records: &[Record], window: usize) -> Result<Vec<Example>> {
        let alphabet: Option<HashMap<char, u32>> = match &self.model {
            ModelSpec::CharLm { alphabet: Some(a), .. } => {
                Some(a.chars().enumerate().map(|(i, c)| (c, i as u32)).collect())
            }
            _ => None,
        };
        let mut out = Vec::new();
        for (line, r) in records.iter().enumerate() {
            match r {
                Record::Text { text } => {
                    let alphabet = alphabet.as_ref().ok_or_else(|| GrapeError::IngestError {
                        path: path.to_path_buf(),
                        line: line + 1,
                        message: "text records need a char_lm model with an `alphabet`".into(),
                    })?;
                    let tokens = text
                        .chars()
                        .map(|c| {
                            alphabet.get(&c).copied().ok_or_else(|| GrapeError::IngestError {
                                path: path.to_path_buf(),
                                line: line + 1,
                                message: format!("character {c:?} is not in the alphabet"),
                            })
                        })
                        .collect::<Result<Vec<u32>>>()?;
                    out.extend(windows(&tokens, window));
                }
                Record::Features { x, y } => out.push(Example::Features {
                    x: x.clone(),
                    y: y.clone(),
                }),
            }
        }
        Ok(out)
    }

    /// Materializes every domain and task dataset.
    pub fn build_store(&self) -> Result<MixtureStore> {
        let languages = self.build_languages()?;
        let domains = self
            .domains
            .iter()
            .enumerate()
            .map(|(i, s)| self.build_dataset(s, i as u64, &languages))
            .collect::<Result<Vec<_>>>()?;
        let offset = self.domains.len() as u64;
        let tasks = self
            .tasks
            .iter()
            .enumerate()
            .map(|(i, s)| self.build_dataset(s, offset + i as u64, &languages))
            .collect::<Result<Vec<_>>>()?;
        MixtureStore::new(domains, tasks)
    }

    fn initial_state(
        &self,
        model: &dyn DifferentiableModel,
        init: Option<Vec<f64>>,
        store: &MixtureStore,
    ) -> Result<InitialState> {
        let mut state = InitialState::uniform(model, store)?;
        if let Some(p) = init {
            state.params = p;
        }
        if let Some(path) = &self.init_alpha {
            state.alpha = relabel(SimplexWeights::load(path)?, store.domain_labels(), "init_alpha")?;
        }
        if let Some(path) = &self.init_z {
            state.z = relabel(SimplexWeights::load(path)?, store.task_labels(), "init_z")?;
        }
        Ok(state)
    }
}

fn check_window(window: usize, length: usize) -> Result<()> {
    if window < 2 {
        return Err(GrapeError::ConfigError("`window`: must be at least 2".into()));
    }
    if length < 2 {
        return Err(GrapeError::ConfigError("`length`: must be at least 2".into()));
    }
    Ok(())
}

/// Loaded weights must carry exactly the store's labels, in any order.
fn relabel(w: SimplexWeights, labels: Vec<String>, field: &str) -> Result<SimplexWeights> {
    let values = labels
        .iter()
        .map(|l| {
            w.labels()
                .iter()
                .position(|x| x == l)
                .map(|i| w.values()[i])
                .ok_or_else(|| GrapeError::ConfigError(format!("`{field}`: no weight for `{l}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if w.len() != labels.len() {
        return Err(GrapeError::ConfigError(format!(
            "`{field}`: expected {} weights",
            labels.len()
        )));
    }
    SimplexWeights::new(labels, values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub name: String,
    pub loss: f64,
}

/// Machine-readable outcome of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub total_steps: u64,
    pub tasks: Vec<TaskSummary>,
    pub average_loss: f64,
    pub worst_loss: f64,
    pub worst_task: String,
    pub train_grad_evals: u64,
    pub reweight_grad_evals: u64,
}

impl RunSummary {
    pub fn from_outcome(cfg: &RunConfig, outcome: &TrainOutcome) -> Self {
        let last = outcome.trajectory.last().expect("a run records at least its start");
        let tasks: Vec<TaskSummary> = outcome
            .trajectory
            .task_labels
            .iter()
            .zip(&last.losses)
            .map(|(name, loss)| TaskSummary {
                name: name.clone(),
                loss: *loss,
            })
            .collect();
        let average_loss = last.losses.iter().sum::<f64>() / last.losses.len() as f64;
        let worst = tasks.iter().fold(&tasks[0], |w, t| if t.loss > w.loss { t } else { w });
        RunSummary {
            algorithm: cfg.training.algorithm,
            seed: cfg.seed,
            total_steps: cfg.training.total_steps,
            average_loss,
            worst_loss: worst.loss,
            worst_task: worst.name.clone(),
            tasks,
            train_grad_evals: outcome.counter.train_grad_evals,
            reweight_grad_evals: outcome.counter.reweight_evals(),
        }
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).expect("outputs serialize");
    fs::write(&path, text + "\n").map_err(|e| GrapeError::io(&path, e))
}

/// Trains as configured without writing anything.
pub fn execute(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (model, init) = cfg.build_model()?;
    let store = cfg.build_store()?;
    let state = cfg.initial_state(model.as_ref(), init, &store)?;
    train_run(&cfg.training, model.as_ref(), &store, state, cfg.seed)
}

/// Trains and writes `trajectory.csv`, `trajectory.json`, `alpha.json`,
/// `z.json`, `params.json` and `summary.json` into the output directory.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let outcome = execute(cfg)?;
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(|e| GrapeError::io(dir, e))?;
    outcome.trajectory.export_csv(&dir.join("trajectory.csv"))?;
    outcome.trajectory.save_json(&dir.join("trajectory.json"))?;
    outcome.alpha.save(&dir.join("alpha.json"))?;
    outcome.z.save(&dir.join("z.json"))?;
    write_json(dir, "params.json", &outcome.params)?;
    let summary = RunSummary::from_outcome(cfg, &outcome);
    write_json(dir, "summary.json", &summary)?;
    info!(
        "{}: average loss {:.6}, worst {:.6} ({})",
        summary.algorithm.name(),
        summary.average_loss,
        summary.worst_loss,
        summary.worst_task
    );
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [model]
        kind = "quadratic"

        [[domains]]
        name = "d"
        source = "quadratic"
        mix = [1.0]

        [[tasks]]
        name = "t"
        source = "quadratic"
        mix = [1.0]
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.training.update_every_alpha, 100);
        assert_eq!(cfg.training.update_every_z, 100);
        assert_eq!(cfg.training.step_ratio_alpha, 1.5);
        assert_eq!(cfg.training.step_ratio_z, 10.0);
        assert_eq!(cfg.training.ema_beta, 0.7);
        assert_eq!(cfg.seed, 0);
        assert!(cfg.init_alpha.is_none() && cfg.init_z.is_none());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml(&format!("bogus_key = 1\n{MINIMAL}")).unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
        let err = RunConfig::from_toml(&format!("[training]\nstep_size = 1\n{MINIMAL}")).unwrap_err();
        assert!(err.to_string().contains("step_size"), "{err}");
    }

    #[test]
    fn negative_step_ratio_is_rejected() {
        let err = RunConfig::from_toml(&format!("[training]\nstep_ratio_z = -1.0\n{MINIMAL}")).unwrap_err();
        assert!(
            matches!(err, GrapeError::ConfigError(ref m) if m.contains("step_ratio_z")),
            "{err}"
        );
    }

    #[test]
    fn labels_are_checked() {
        let dup = MINIMAL.replace("name = \"t\"", "name = \"d\"");
        assert!(RunConfig::from_toml(&dup).is_err());
        let comma = MINIMAL.replace("name = \"t\"", "name = \"a,b\"");
        assert!(RunConfig::from_toml(&comma).is_err());
    }

    #[test]
    fn markov_sources_need_known_languages() {
        let text = r#"
            [model]
            kind = "char_lm"
            vocab = 4
            [[domains]]
            name = "d"
            source = "markov"
            language = "missing"
            [[tasks]]
            name = "t"
            source = "markov"
            language = "missing"
        "#;
        let err = RunConfig::from_toml(text).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }

    #[test]
    fn markov_store_is_deterministic() {
        let text = r#"
            seed = 3
            [model]
            kind = "char_lm"
            vocab = 5
            [languages.a]
            sharpness = 2.0
            [languages.b]
            [[domains]]
            name = "a"
            source = "markov"
            language = "a"
            length = 500
            [[domains]]
            name = "b"
            source = "markov"
            language = "b"
            length = 500
            [[tasks]]
            name = "t"
            source = "markov_mixture"
            components = [["a", 0.3], ["b", 0.7]]
            length = 200
        "#;
        let cfg = RunConfig::from_toml(text).unwrap();
        let s1 = cfg.build_store().unwrap();
        let s2 = cfg.build_store().unwrap();
        assert_eq!(s1.domains(), s2.domains());
        assert_eq!(s1.tasks(), s2.tasks());
        assert_ne!(s1.domains()[0].examples, s1.domains()[1].examples);
    }

    #[test]
    fn text_files_map_through_the_alphabet() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d.jsonl");
        fs::write(&data, "{\"text\": \"abcab\"}\n{\"text\": \"ba\"}\n").unwrap();
        let bad = dir.path().join("bad.jsonl");
        fs::write(&bad, "{\"text\": \"abz\"}\n").unwrap();
        let cfg_path = dir.path().join("run.toml");
        let text = r#"
            [model]
            kind = "char_lm"
            alphabet = "abc"
            [[domains]]
            name = "d"
            source = "file"
            path = "d.jsonl"
            window = 3
            [[tasks]]
            name = "t"
            source = "file"
            path = "d.jsonl"
        "#;
        fs::write(&cfg_path, text).unwrap();
        let cfg = parse_config(&cfg_path).unwrap();
        let store = cfg.build_store().unwrap();
        assert_eq!(
            store.domains()[0].examples,
            vec![
                Example::Tokens(vec![0, 1, 2]),
                Example::Tokens(vec![2, 0, 1]),
                Example::Tokens(vec![1, 0])
            ]
        );
        fs::write(&cfg_path, text.replacen("d.jsonl", "bad.jsonl", 1)).unwrap();
        let err = parse_config(&cfg_path).unwrap().build_store().unwrap_err();
        assert!(matches!(err, GrapeError::IngestError { line: 1, .. }), "{err}");
    }

    #[test]
    fn run_writes_all_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::from_toml(MINIMAL).unwrap();
        cfg.out_dir = dir.path().join("out");
        cfg.training.total_steps = 30;
        cfg.training.update_every_z = 10;
        cfg.training.update_every_alpha = 10;
        let summary = run(&cfg).unwrap();
        for f in [
            "trajectory.csv",
            "trajectory.json",
            "alpha.json",
            "z.json",
            "params.json",
            "summary.json",
        ] {
            assert!(cfg.out_dir.join(f).exists(), "{f}");
        }
        assert_eq!(summary.tasks.len(), 1);
        assert_eq!(summary.worst_loss, summary.average_loss);
        assert_eq!(summary.train_grad_evals, 30);
    }
}
