//! Loading resources and running evaluation cells.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use embeval::analysis::{size_sweep, SizeSweep};
use embeval::compose::{EncoderSpec, PoolOp, PrecomputedVectors, SifModel, SIF_DEFAULT_A};
use embeval::corpus::{load_labeled_dataset, LabeledDataset, Manifest, PairDataset, SplitManifest};
use embeval::evaluators::{
    eval_learned_similarity, eval_ucp, run_transfer_task, train_similarity_regressor,
    ClassifierKind, ClassifierSpec, EvalResult, Protocol,
};
use embeval::wordvec::{load_word_vectors, WordVectors};
use log::info;
use rayon::prelude::*;

use crate::config::{
    EncoderKind, RunConfig, SplitKind, TaskConfig, TaskKindConfig, TrainingConfig,
};

/// Key under which a result is stored; also the output sort order.
pub type ResultKey = (String, String, String, String, bool);

pub fn result_key(r: &EvalResult) -> ResultKey {
    (
        r.task.clone(),
        r.encoder.clone(),
        r.protocol.as_str().to_string(),
        r.classifier.clone(),
        r.normalized,
    )
}

pub enum Dataset {
    Labeled(LabeledDataset),
    Pairs(PairDataset),
}

/// Everything a run reads from disk, loaded once and shared by all cells.
pub struct Resources {
    pub encoders: BTreeMap<String, EncoderSpec>,
    pub datasets: BTreeMap<String, Dataset>,
    pub vectors: BTreeMap<String, Arc<WordVectors>>,
}

impl Resources {
    pub fn load(config: &RunConfig) -> embeval::Result<Self> {
        let mut vectors = BTreeMap::new();
        for (name, v) in &config.vectors {
            let path = config.resolve(&v.path);
            info!("loading vectors {name} from {}", path.display());
            let wv = load_word_vectors(&path, v.dim)?;
            vectors.insert(name.clone(), Arc::new(wv));
        }
        let counts: HashMap<String, PathBuf> = config
            .frequencies
            .iter()
            .map(|(name, f)| (name.clone(), config.resolve(&f.path)))
            .collect();
        let mut precomputed = HashMap::new();
        for e in &config.encoders {
            if let (EncoderKind::Precomputed, Some(path)) = (e.kind, &e.path) {
                let p = PrecomputedVectors::load(&config.resolve(path))?;
                precomputed.insert(e.name.clone(), Arc::new(p));
            }
        }
        let mut encoders = BTreeMap::new();
        for e in &config.encoders {
            let spec = build_spec(config, &e.name, &vectors, &counts, &precomputed)?;
            encoders.insert(e.name.clone(), spec);
        }
        let mut datasets = BTreeMap::new();
        for t in &config.tasks {
            datasets.insert(t.name.clone(), load_task(config, t)?);
        }
        Ok(Resources {
            encoders,
            datasets,
            vectors,
        })
    }
}

fn build_spec(
    config: &RunConfig,
    name: &str,
    vectors: &BTreeMap<String, Arc<WordVectors>>,
    counts: &HashMap<String, PathBuf>,
    precomputed: &HashMap<String, Arc<PrecomputedVectors>>,
) -> embeval::Result<EncoderSpec> {
    let e = config
        .encoder(name)
        .ok_or_else(|| embeval::Error::Invalid(format!("unknown encoder {name}")))?;
    let wv = || -> embeval::Result<Arc<WordVectors>> {
        let v = e.vectors.as_deref().unwrap_or_default();
        vectors
            .get(v)
            .cloned()
            .ok_or_else(|| embeval::Error::Invalid(format!("encoder {name}: unknown vectors {v}")))
    };
    Ok(match e.kind {
        EncoderKind::Average => EncoderSpec::Average { vectors: wv()? },
        EncoderKind::Sif => {
            let f = e.frequencies.as_deref().unwrap_or_default();
            let path = counts
                .get(f)
                .ok_or_else(|| embeval::Error::Invalid(format!("encoder {name}: unknown frequencies {f}")))?;
            EncoderSpec::Sif {
                vectors: wv()?,
                model: Arc::new(SifModel::load_counts(path, e.a.unwrap_or(SIF_DEFAULT_A))?),
                remove_pc: e.remove_pc.unwrap_or(true),
            }
        }
        EncoderKind::Pool => EncoderSpec::PoolConcat {
            vectors: wv()?,
            ops: e
                .ops
                .iter()
                .flatten()
                .map(|o| o.parse::<PoolOp>())
                .collect::<embeval::Result<_>>()?,
        },
        EncoderKind::Project => EncoderSpec::RandomProject {
            vectors: wv()?,
            target_dim: e.target_dim.unwrap_or(0),
            seed: e.seed.unwrap_or(config.seed()),
        },
        EncoderKind::Concat => EncoderSpec::Concat(
            e.members
                .iter()
                .flatten()
                .map(|m| build_spec(config, m, vectors, counts, precomputed))
                .collect::<embeval::Result<_>>()?,
        ),
        EncoderKind::Precomputed => EncoderSpec::Precomputed(
            precomputed
                .get(name)
                .cloned()
                .ok_or_else(|| embeval::Error::Invalid(format!("encoder {name}: not loaded")))?,
        ),
    })
}

fn load_task(config: &RunConfig, t: &TaskConfig) -> embeval::Result<Dataset> {
    match t.kind {
        TaskKindConfig::Classification => {
            let split = match t.split.unwrap_or(SplitKind::Cv) {
                SplitKind::Cv => SplitManifest::CrossValidation {
                    k: t.folds.unwrap_or(10),
                    seed: t.cv_seed.unwrap_or(config.seed()),
                },
                SplitKind::Fixed => {
                    let range = |r: Option<[usize; 2]>| r.map(|[a, b]| a..b);
                    SplitManifest::Fixed {
                        train: range(t.train).unwrap_or(0..0),
                        dev: range(t.dev),
                        test: range(t.test).unwrap_or(0..0),
                    }
                }
            };
            let manifest = Manifest {
                n_classes: t.n_classes.unwrap_or(0),
                split,
            };
            let path = config.resolve(t.path.as_deref().unwrap_or(Path::new("")));
            info!("loading task {} from {}", t.name, path.display());
            Ok(Dataset::Labeled(load_labeled_dataset(&path, &manifest)?))
        }
        TaskKindConfig::Similarity => {
            let resolve = |p: &Option<std::path::PathBuf>| p.as_ref().map(|p| config.resolve(p));
            let (train, dev, test) = (resolve(&t.train_path), resolve(&t.dev_path), resolve(&t.test_path));
            Ok(Dataset::Pairs(PairDataset::load(
                train.as_deref(),
                dev.as_deref(),
                test.as_deref(),
            )?))
        }
    }
}

pub fn classifier_spec(kind: ClassifierKind, training: &TrainingConfig, seed: u64) -> ClassifierSpec {
    let mut spec = ClassifierSpec::new(kind);
    spec.l2_grid = training.l2_grid();
    spec.hidden_sizes = training.hidden_sizes();
    spec.seed = seed;
    if let Some(m) = training.max_epochs {
        spec.max_epochs = m;
    }
    if let Some(t) = training.tolerance {
        spec.tolerance = t;
    }
    if let Some(k) = training.inner_folds {
        spec.inner_folds = k;
    }
    spec
}

/// One (task, encoder, protocol, classifier, normalization) evaluation.
#[derive(Debug, Clone)]
pub struct Cell {
    pub task: String,
    pub encoder: String,
    pub protocol: Protocol,
    pub classifier: Option<ClassifierSpec>,
    pub l2_grid: Vec<f64>,
    pub normalized: bool,
}

/// Expands evaluations into cells; `both` yields one cell per flag.
pub fn expand_cells(config: &RunConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for ev in &config.evaluations {
        let protocol: Protocol = ev.protocol.parse().expect("validated protocol");
        for encoder in RunConfig::evaluation_encoders(ev) {
            let classifiers: Vec<Option<ClassifierSpec>> = if protocol == Protocol::Classify {
                ev.classifiers
                    .iter()
                    .map(|c| {
                        let kind: ClassifierKind = c.parse().expect("validated classifier");
                        Some(classifier_spec(kind, &ev.training, config.seed()))
                    })
                    .collect()
            } else {
                vec![None]
            };
            for classifier in classifiers {
                for &normalized in ev.normalization.flags() {
                    cells.push(Cell {
                        task: ev.task.clone(),
                        encoder: encoder.clone(),
                        protocol,
                        classifier: classifier.clone(),
                        l2_grid: ev.training.l2_grid(),
                        normalized,
                    });
                }
            }
        }
    }
    cells
}

pub fn run_cell(cell: &Cell, res: &Resources) -> embeval::Result<EvalResult> {
    let spec = &res.encoders[&cell.encoder];
    let encoder = spec.build()?;
    let missing = |what: &str| embeval::Error::Invalid(format!("task {}: {what}", cell.task));
    info!(
        "{} / {} / {} / normalized={}",
        cell.task, cell.encoder, cell.protocol, cell.normalized
    );
    match (&res.datasets[&cell.task], cell.protocol) {
        (Dataset::Labeled(data), Protocol::Classify) => {
            let clf = cell.classifier.as_ref().ok_or_else(|| missing("no classifier"))?;
            run_transfer_task(&cell.task, data, &cell.encoder, &encoder, clf, cell.normalized)
        }
        (Dataset::Pairs(data), Protocol::Ucp) => {
            let test = data.test.as_ref().ok_or_else(|| missing("no test split"))?;
            let r = eval_ucp(test, &encoder, cell.normalized)?;
            Ok(EvalResult::from_ucp(&cell.task, &cell.encoder, encoder.output_dim(), &r))
        }
        (Dataset::Pairs(data), Protocol::LearnedSim) => {
            let test = data.test.as_ref().ok_or_else(|| missing("no test split"))?;
            let model = train_similarity_regressor(data, &encoder, cell.normalized, &cell.l2_grid)?;
            let r = eval_learned_similarity(&model, test)?;
            Ok(EvalResult::from_learned(&cell.task, &cell.encoder, &model, &r))
        }
        _ => Err(missing("protocol does not fit the dataset")),
    }
}

pub struct RunOutput {
    pub results: BTreeMap<ResultKey, EvalResult>,
    pub sweeps: Vec<SizeSweep>,
}

/// Runs every cell and sweep on a pool of `workers` threads. Results are
/// keyed, so the output does not depend on scheduling.
pub fn execute(config: &RunConfig, res: &Resources, workers: usize) -> embeval::Result<RunOutput> {
    let cells = expand_cells(config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| embeval::Error::Invalid(e.to_string()))?;
    let (cell_results, sweeps) = pool.install(|| {
        let cell_results: Vec<embeval::Result<EvalResult>> =
            cells.par_iter().map(|c| run_cell(c, res)).collect();
        let sweeps: Vec<embeval::Result<SizeSweep>> = config
            .sweeps
            .par_iter()
            .map(|s| run_sweep(config, s, res))
            .collect();
        (cell_results, sweeps)
    });
    let sweeps = sweeps.into_iter().collect::<embeval::Result<Vec<_>>>()?;
    let mut results = BTreeMap::new();
    for r in cell_results {
        let r = r?;
        results.insert(result_key(&r), r);
    }
    for s in &sweeps {
        for r in &s.results {
            results.entry(result_key(r)).or_insert_with(|| r.clone());
        }
    }
    Ok(RunOutput { results, sweeps })
}

fn run_sweep(
    config: &RunConfig,
    s: &crate::config::SweepConfig,
    res: &Resources,
) -> embeval::Result<SizeSweep> {
    let vectors = res.vectors[&s.vectors].clone();
    let seed = s.seed.unwrap_or(config.seed());
    let tasks: Vec<(String, &LabeledDataset)> = s
        .tasks
        .iter()
        .map(|t| match &res.datasets[t] {
            Dataset::Labeled(d) => Ok((t.clone(), d)),
            Dataset::Pairs(_) => Err(embeval::Error::Invalid(format!("{t} is not a classification task"))),
        })
        .collect::<embeval::Result<_>>()?;
    let references: Vec<(String, EncoderSpec)> = s
        .references
        .iter()
        .map(|r| (r.clone(), res.encoders[r].clone()))
        .collect();
    let kind: ClassifierKind = s.classifier.as_deref().unwrap_or("logreg").parse()?;
    let spec = classifier_spec(kind, &s.training, config.seed());
    let normalized = s.normalization.flags()[0];
    size_sweep(
        &s.name,
        &tasks,
        |size| {
            Ok(EncoderSpec::RandomProject {
                vectors: vectors.clone(),
                target_dim: size,
                seed,
            })
        },
        &s.sizes,
        &references,
        &spec,
        normalized,
    )
}
