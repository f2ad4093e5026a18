//! Run configuration: a sectioned `key = value` (TOML) file.
//!
//! ```toml
//! seed = 1111
//! workers = 4
//!
//! [vectors.glove]
//! path = "glove.6B.300d.txt"
//! dim = 300
//!
//! [[encoders]]
//! name = "glove-avg"
//! kind = "average"
//! vectors = "glove"
//!
//! [[tasks]]
//! name = "mr"
//! kind = "classification"
//! path = "mr.tsv"
//! n_classes = 2
//! split = "cv"
//!
//! [[evaluations]]
//! task = "mr"
//! encoders = ["glove-avg"]
//! protocol = "classify"
//! classifiers = ["logreg", "mlp"]
//! normalization = "both"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.
//! [`RunConfig::validate`] checks names, parameters and file existence
//! without reading any data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use embeval::compose::PoolOp;
use embeval::evaluators::{ClassifierKind, Protocol, DEFAULT_HIDDEN_SIZES, DEFAULT_L2_GRID};
use serde::Deserialize;

pub const DEFAULT_SEED: u64 = 1111;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub vectors: BTreeMap<String, VectorsConfig>,
    #[serde(default)]
    pub frequencies: BTreeMap<String, FrequencyConfig>,
    #[serde(default)]
    pub encoders: Vec<EncoderConfig>,
    #[serde(default)]
    pub tasks: Vec<TaskConfig>,
    #[serde(default)]
    pub evaluations: Vec<EvaluationConfig>,
    #[serde(default)]
    pub sweeps: Vec<SweepConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorsConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub dim: Option<usize>,
}

/// `word count` lines for SIF weighting.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyConfig {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Average,
    Sif,
    Pool,
    Project,
    Concat,
    Precomputed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub name: String,
    pub kind: EncoderKind,
    #[serde(default)]
    pub vectors: Option<String>,
    /// sif
    #[serde(default)]
    pub frequencies: Option<String>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub remove_pc: Option<bool>,
    /// pool
    #[serde(default)]
    pub ops: Option<Vec<String>>,
    /// project
    #[serde(default)]
    pub target_dim: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// concat
    #[serde(default)]
    pub members: Option<Vec<String>>,
    /// precomputed
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKindConfig {
    Classification,
    Similarity,
}

/// Role of a classification task in the transfer/probing analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskRole {
    Transfer,
    Probing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Cv,
    Fixed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: String,
    pub kind: TaskKindConfig,
    /// classification: `label<TAB>text` file
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub n_classes: Option<usize>,
    #[serde(default)]
    pub split: Option<SplitKind>,
    #[serde(default)]
    pub folds: Option<usize>,
    #[serde(default)]
    pub cv_seed: Option<u64>,
    /// Fixed split line ranges, `[start, end)`.
    #[serde(default)]
    pub train: Option<[usize; 2]>,
    #[serde(default)]
    pub dev: Option<[usize; 2]>,
    #[serde(default)]
    pub test: Option<[usize; 2]>,
    #[serde(default)]
    pub role: Option<TaskRole>,
    /// similarity: STSBenchmark-format files
    #[serde(default)]
    pub train_path: Option<PathBuf>,
    #[serde(default)]
    pub dev_path: Option<PathBuf>,
    #[serde(default)]
    pub test_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Off,
    On,
    Both,
}

impl Normalization {
    pub fn flags(self) -> &'static [bool] {
        match self {
            Normalization::Off => &[false],
            Normalization::On => &[true],
            Normalization::Both => &[false, true],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub task: String,
    #[serde(default)]
    pub encoder: Option<String>,
    #[serde(default)]
    pub encoders: Vec<String>,
    pub protocol: String,
    #[serde(default)]
    pub classifiers: Vec<String>,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub training: TrainingConfig,
}

/// Optional overrides of the classifier defaults, given as
/// `training = { l2_grid = [0.01, 0.1], max_epochs = 200 }`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default)]
    pub l2_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub hidden_sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub max_epochs: Option<usize>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub inner_folds: Option<usize>,
}

/// Random-projection size sweep over one vector set.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub name: String,
    pub vectors: String,
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub tasks: Vec<String>,
    #[serde(default)]
    pub references: Vec<String>,
    #[serde(default)]
    pub classifier: Option<String>,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub training: TrainingConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "yes")]
    pub deltas: bool,
    #[serde(default = "yes")]
    pub dispersion: bool,
    #[serde(default = "yes")]
    pub classifier_gains: bool,
    #[serde(default)]
    pub correlation: bool,
    #[serde(default = "default_correlation_classifier")]
    pub correlation_classifier: String,
    #[serde(default)]
    pub correlation_normalized: bool,
}

fn yes() -> bool {
    true
}

fn default_correlation_classifier() -> String {
    "logreg".into()
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            deltas: true,
            dispersion: true,
            classifier_gains: true,
            correlation: false,
            correlation_classifier: default_correlation_classifier(),
            correlation_normalized: false,
        }
    }
}

/// Every problem found in a config, reported together.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    pub problems: Vec<String>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.problems.join("; "))
    }
}

impl std::error::Error for ValidationError {}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ValidationError> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| ValidationError {
            problems: vec![format!("config parse error: {}", e.message())],
        })?;
        config.base_dir = base_dir.to_path_buf();
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ValidationError> {
        let text = std::fs::read_to_string(path).map_err(|e| ValidationError {
            problems: vec![format!("cannot read config {}: {e}", path.display())],
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn encoder(&self, name: &str) -> Option<&EncoderConfig> {
        self.encoders.iter().find(|e| e.name == name)
    }

    pub fn task(&self, name: &str) -> Option<&TaskConfig> {
        self.tasks.iter().find(|t| t.name == name)
    }

    /// Checks the whole config, touching the file system only to test that
    /// referenced files exist.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut problems = Vec::new();
        let mut p = |msg: String| problems.push(msg);

        if self.workers == Some(0) {
            p("workers must be positive".into());
        }
        for (name, v) in &self.vectors {
            self.check_file(&format!("vectors.{name}"), &v.path, &mut p);
            if v.dim == Some(0) {
                p(format!("vectors.{name}: dim must be positive"));
            }
        }
        for (name, f) in &self.frequencies {
            self.check_file(&format!("frequencies.{name}"), &f.path, &mut p);
        }

        duplicates(self.encoders.iter().map(|e| e.name.as_str()), "encoder", &mut p);
        duplicates(self.tasks.iter().map(|t| t.name.as_str()), "task", &mut p);
        duplicates(self.sweeps.iter().map(|s| s.name.as_str()), "sweep", &mut p);

        for e in &self.encoders {
            self.check_encoder(e, &mut p);
        }
        self.check_concat_cycles(&mut p);
        for t in &self.tasks {
            self.check_task(t, &mut p);
        }
        for (i, ev) in self.evaluations.iter().enumerate() {
            self.check_evaluation(i, ev, &mut p);
        }
        for s in &self.sweeps {
            self.check_sweep(s, &mut p);
        }
        if self.analysis.correlation
            && self.analysis.correlation_classifier.parse::<ClassifierKind>().is_err()
        {
            p(format!(
                "analysis: unknown correlation_classifier {:?}",
                self.analysis.correlation_classifier
            ));
        }
        if self.evaluations.is_empty() && self.sweeps.is_empty() {
            p("config has no evaluations or sweeps".into());
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(ValidationError { problems })
        }
    }

    fn check_file(&self, what: &str, path: &Path, p: &mut dyn FnMut(String)) {
        let full = self.resolve(path);
        if !full.is_file() {
            p(format!("{what}: file {} not found", full.display()));
        }
    }

    fn check_encoder(
        &self,
        e: &EncoderConfig,
        p: &mut dyn FnMut(String),
    ) {
        let what = format!("encoder {}", e.name);
        let needs_vectors = matches!(
            e.kind,
            EncoderKind::Average | EncoderKind::Sif | EncoderKind::Pool | EncoderKind::Project
        );
        match (&e.vectors, needs_vectors) {
            (Some(v), true) if !self.vectors.contains_key(v) => {
                p(format!("{what}: unknown vectors {v:?}"))
            }
            (None, true) => p(format!("{what}: missing `vectors`")),
            (Some(_), false) => p(format!("{what}: `vectors` not used by this kind")),
            _ => {}
        }
        match e.kind {
            EncoderKind::Sif => {
                match &e.frequencies {
                    Some(f) if !self.frequencies.contains_key(f) => {
                        p(format!("{what}: unknown frequencies {f:?}"))
                    }
                    None => p(format!("{what}: missing `frequencies`")),
                    _ => {}
                }
                if let Some(a) = e.a {
                    if !(a > 0.0) || !a.is_finite() {
                        p(format!("{what}: a must be positive"));
                    }
                }
            }
            EncoderKind::Pool => match &e.ops {
                Some(ops) if !ops.is_empty() => {
                    for op in ops {
                        if op.parse::<PoolOp>().is_err() {
                            p(format!("{what}: unknown pooling op {op:?}"));
                        }
                    }
                }
                _ => p(format!("{what}: `ops` must list at least one of min, avg, max")),
            },
            EncoderKind::Project => {
                if !matches!(e.target_dim, Some(d) if d > 0) {
                    p(format!("{what}: `target_dim` must be positive"));
                }
            }
            EncoderKind::Concat => match &e.members {
                Some(m) if !m.is_empty() => {
                    for name in m {
                        if self.encoder(name).is_none() {
                            p(format!("{what}: unknown member {name:?}"));
                        }
                    }
                }
                _ => p(format!("{what}: `members` must be non-empty")),
            },
            EncoderKind::Precomputed => match &e.path {
                Some(path) => self.check_file(&what, path, p),
                None => p(format!("{what}: missing `path`")),
            },
            EncoderKind::Average => {}
        }
    }

    fn check_concat_cycles(&self, p: &mut dyn FnMut(String)) {
        fn visit<'a>(
            c: &'a RunConfig,
            name: &'a str,
            stack: &mut Vec<&'a str>,
        ) -> Option<String> {
            if stack.contains(&name) {
                return Some(format!("encoder {name}: concatenation cycle"));
            }
            let e = c.encoder(name)?;
            stack.push(name);
            for m in e.members.iter().flatten() {
                if let Some(err) = visit(c, m, stack) {
                    return Some(err);
                }
            }
            stack.pop();
            None
        }
        for e in &self.encoders {
            if e.kind == EncoderKind::Concat {
                if let Some(err) = visit(self, &e.name, &mut Vec::new()) {
                    p(err);
                    return;
                }
            }
        }
    }

    fn check_task(
        &self,
        t: &TaskConfig,
        p: &mut dyn FnMut(String),
    ) {
        let what = format!("task {}", t.name);
        match t.kind {
            TaskKindConfig::Classification => {
                match &t.path {
                    Some(path) => self.check_file(&what, path, p),
                    None => p(format!("{what}: missing `path`")),
                }
                if !matches!(t.n_classes, Some(n) if n >= 2) {
                    p(format!("{what}: `n_classes` must be at least 2"));
                }
                match t.split.unwrap_or(SplitKind::Cv) {
                    SplitKind::Cv => {
                        if t.folds.is_some_and(|k| k < 2) {
                            p(format!("{what}: `folds` must be at least 2"));
                        }
                    }
                    SplitKind::Fixed => {
                        for (key, range) in [("train", t.train), ("test", t.test)] {
                            if range.is_none() {
                                p(format!("{what}: fixed split needs `{key}`"));
                            }
                        }
                        for r in [t.train, t.dev, t.test].into_iter().flatten() {
                            if r[0] >= r[1] {
                                p(format!("{what}: empty range {r:?}"));
                            }
                        }
                    }
                }
            }
            TaskKindConfig::Similarity => {
                for (key, path) in [
                    ("train_path", &t.train_path),
                    ("dev_path", &t.dev_path),
                    ("test_path", &t.test_path),
                ] {
                    if let Some(path) = path {
                        self.check_file(&format!("{what} {key}"), path, p);
                    }
                }
                if t.test_path.is_none() {
                    p(format!("{what}: missing `test_path`"));
                }
                if t.role.is_some() {
                    p(format!("{what}: `role` applies to classification tasks"));
                }
            }
        }
    }

    /// Encoder names of an evaluation, `encoder` first.
    pub fn evaluation_encoders(ev: &EvaluationConfig) -> Vec<String> {
        ev.encoder.iter().chain(&ev.encoders).cloned().collect()
    }

    fn check_evaluation(&self, i: usize, ev: &EvaluationConfig, p: &mut dyn FnMut(String)) {
        let what = format!("evaluation #{} ({})", i + 1, ev.task);
        let encoders = Self::evaluation_encoders(ev);
        if encoders.is_empty() {
            p(format!("{what}: no encoders"));
        }
        for name in &encoders {
            if self.encoder(name).is_none() {
                p(format!("{what}: unknown encoder {name:?}"));
            }
        }
        let protocol = match ev.protocol.parse::<Protocol>() {
            Ok(pr) => Some(pr),
            Err(_) => {
                p(format!("{what}: unknown protocol {:?}", ev.protocol));
                None
            }
        };
        let Some(task) = self.task(&ev.task) else {
            p(format!("{what}: unknown task"));
            return;
        };
        match (protocol, task.kind) {
            (Some(Protocol::Classify), TaskKindConfig::Classification) => {
                if ev.classifiers.is_empty() {
                    p(format!("{what}: `classifiers` must list logreg and/or mlp"));
                }
                for c in &ev.classifiers {
                    if c.parse::<ClassifierKind>().is_err() {
                        p(format!("{what}: unknown classifier {c:?}"));
                    }
                }
            }
            (Some(Protocol::Ucp), TaskKindConfig::Similarity) => {
                if !ev.classifiers.is_empty() {
                    p(format!("{what}: ucp takes no classifiers"));
                }
            }
            (Some(Protocol::LearnedSim), TaskKindConfig::Similarity) => {
                if task.train_path.is_none() || task.dev_path.is_none() {
                    p(format!("{what}: learned_sim needs train_path and dev_path"));
                }
                if !ev.classifiers.is_empty() {
                    p(format!("{what}: learned_sim takes no classifiers"));
                }
            }
            (Some(pr), _) => p(format!("{what}: protocol {pr} does not fit the task kind")),
            (None, _) => {}
        }
        check_training(&what, &ev.training, p);
    }

    fn check_sweep(&self, s: &SweepConfig, p: &mut dyn FnMut(String)) {
        let what = format!("sweep {}", s.name);
        if !self.vectors.contains_key(&s.vectors) {
            p(format!("{what}: unknown vectors {:?}", s.vectors));
        }
        if s.sizes.is_empty() || s.sizes.contains(&0) || s.sizes.windows(2).any(|w| w[0] >= w[1]) {
            p(format!("{what}: sizes must be positive and strictly increasing"));
        }
        if s.tasks.is_empty() {
            p(format!("{what}: no tasks"));
        }
        for t in &s.tasks {
            match self.task(t) {
                Some(task) if task.kind == TaskKindConfig::Classification => {}
                Some(_) => p(format!("{what}: task {t} is not a classification task")),
                None => p(format!("{what}: unknown task {t:?}")),
            }
        }
        for r in &s.references {
            if self.encoder(r).is_none() {
                p(format!("{what}: unknown reference encoder {r:?}"));
            }
        }
        let sweep_names: BTreeSet<String> = s.sizes.iter().map(|n| format!("{}-{n}", s.name)).collect();
        for e in &self.encoders {
            if sweep_names.contains(&e.name) {
                p(format!("{what}: generated name {} clashes with an encoder", e.name));
            }
        }
        if let Some(c) = &s.classifier {
            if c.parse::<ClassifierKind>().is_err() {
                p(format!("{what}: unknown classifier {c:?}"));
            }
        }
        if s.normalization == Normalization::Both {
            p(format!("{what}: normalization must be on or off"));
        }
        check_training(&what, &s.training, p);
    }
}

fn duplicates<'a>(names: impl Iterator<Item = &'a str>, what: &str, p: &mut dyn FnMut(String)) {
    let mut seen = BTreeSet::new();
    for n in names {
        if n.is_empty() {
            p(format!("empty {what} name"));
        } else if !seen.insert(n) {
            p(format!("duplicate {what} name {n:?}"));
        }
    }
}

fn check_training(what: &str, t: &TrainingConfig, p: &mut dyn FnMut(String)) {
    if let Some(grid) = &t.l2_grid {
        if grid.is_empty() || grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            p(format!("{what}: l2_grid must be non-empty and non-negative"));
        }
    }
    if let Some(h) = &t.hidden_sizes {
        if h.is_empty() || h.contains(&0) {
            p(format!("{what}: hidden_sizes must be non-empty and positive"));
        }
    }
    if t.tolerance.is_some_and(|v| !(v > 0.0)) {
        p(format!("{what}: tolerance must be positive"));
    }
    if t.max_epochs == Some(0) {
        p(format!("{what}: max_epochs must be positive"));
    }
    if t.inner_folds.is_some_and(|k| k < 2) {
        p(format!("{what}: inner_folds must be at least 2"));
    }
}

impl TrainingConfig {
    pub fn l2_grid(&self) -> Vec<f64> {
        self.l2_grid.clone().unwrap_or_else(|| DEFAULT_L2_GRID.to_vec())
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.hidden_sizes
            .clone()
            .unwrap_or_else(|| DEFAULT_HIDDEN_SIZES.to_vec())
    }
}
