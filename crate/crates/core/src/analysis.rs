//! Meta-analysis over evaluation results and score tables.
//!
//! Everything here is a pure function of its inputs except [`size_sweep`],
//! which runs the transfer tasks it is asked to sweep.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::compose::EncoderSpec;
use crate::corpus::LabeledDataset;
use crate::error::{Error, Result};
use crate::evaluators::{run_transfer_task, ClassifierKind, ClassifierSpec, EvalResult};
use crate::metrics::{dispersion, spearman, Dispersion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Transfer,
    Probing,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Transfer => "transfer",
            TaskKind::Probing => "probing",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Internal,
    External,
}

#[derive(Debug, Serialize, Deserialize)]
struct CellRecord {
    encoder: String,
    task: String,
    kind: TaskKind,
    score: f64,
}

/// Encoders × tasks matrix of scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    kinds: BTreeMap<String, TaskKind>,
    cells: BTreeMap<(String, String), f64>,
    provenance: Provenance,
}

impl ScoreTable {
    pub fn new(provenance: Provenance) -> Self {
        ScoreTable {
            kinds: BTreeMap::new(),
            cells: BTreeMap::new(),
            provenance,
        }
    }

    pub fn insert(&mut self, encoder: &str, task: &str, kind: TaskKind, score: f64) -> Result<()> {
        if !score.is_finite() {
            return Err(Error::invalid(format!("non-finite score for {encoder}/{task}")));
        }
        match self.kinds.get(task) {
            Some(k) if *k != kind => {
                return Err(Error::invalid(format!("task {task} listed as both {k} and {kind}")));
            }
            Some(_) => {}
            None => {
                self.kinds.insert(task.to_string(), kind);
            }
        }
        if self
            .cells
            .insert((encoder.to_string(), task.to_string()), score)
            .is_some()
        {
            return Err(Error::invalid(format!("duplicate cell {encoder}/{task}")));
        }
        Ok(())
    }

    /// Reads the `encoder,task,kind,score` CSV layout.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let headers = reader.headers().map_err(|e| Error::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if headers.iter().collect::<Vec<_>>() != ["encoder", "task", "kind", "score"] {
            return Err(Error::File {
                path: path.to_path_buf(),
                message: "expected header encoder,task,kind,score".into(),
            });
        }
        let mut table = ScoreTable::new(Provenance::External);
        for (i, record) in reader.deserialize::<CellRecord>().enumerate() {
            let line = i + 2;
            let r = record.map_err(|e| Error::Load {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            })?;
            table
                .insert(&r.encoder, &r.task, r.kind, r.score)
                .map_err(|e| Error::Load {
                    path: path.to_path_buf(),
                    line,
                    message: e.to_string(),
                })?;
        }
        Ok(table)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        for ((encoder, task), score) in &self.cells {
            w.serialize(CellRecord {
                encoder: encoder.clone(),
                task: task.clone(),
                kind: self.kinds[task],
                score: *score,
            })
            .map_err(|e| Error::File {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Headline scores of evaluation results; `kind_of` tags each task.
    pub fn from_results(
        results: &[EvalResult],
        kind_of: impl Fn(&str) -> TaskKind,
    ) -> Result<Self> {
        let mut table = ScoreTable::new(Provenance::Internal);
        for r in results {
            let score = r.metric(r.primary_metric()).ok_or_else(|| {
                Error::invalid(format!("{}/{} has no {}", r.encoder, r.task, r.primary_metric()))
            })?;
            table.insert(&r.encoder, &r.task, kind_of(&r.task), score)?;
        }
        Ok(table)
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn encoders(&self) -> Vec<String> {
        self.cells
            .keys()
            .map(|(e, _)| e.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn tasks(&self, kind: TaskKind) -> Vec<String> {
        self.kinds
            .iter()
            .filter(|(_, k)| **k == kind)
            .map(|(t, _)| t.clone())
            .collect()
    }

    pub fn get(&self, encoder: &str, task: &str) -> Option<f64> {
        self.cells
            .get(&(encoder.to_string(), task.to_string()))
            .copied()
    }

    /// Scores of one task for every encoder that has it, in encoder order.
    pub fn column(&self, task: &str) -> Vec<(String, f64)> {
        self.cells
            .iter()
            .filter(|((_, t), _)| t == task)
            .map(|((e, _), s)| (e.clone(), *s))
            .collect()
    }
}

/// Normalized minus standard score of one encoder, in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub encoder: String,
    pub task: String,
    pub classifier: String,
    pub standard: f64,
    pub normalized: f64,
    pub delta_pp: f64,
}

pub fn delta_pp(standard: f64, normalized: f64) -> f64 {
    100.0 * (normalized - standard)
}

impl DeltaRow {
    pub fn new(encoder: &str, task: &str, classifier: &str, standard: f64, normalized: f64) -> Self {
        DeltaRow {
            encoder: encoder.to_string(),
            task: task.to_string(),
            classifier: classifier.to_string(),
            standard,
            normalized,
            delta_pp: delta_pp(standard, normalized),
        }
    }

    /// Delta as drawn in a chart: similarity-task deltas may be divided by
    /// ten so they share an axis with transfer-task deltas.
    pub fn chart_value(&self, similarity_task: bool, scale_similarity: bool) -> f64 {
        if similarity_task && scale_similarity {
            self.delta_pp / 10.0
        } else {
            self.delta_pp
        }
    }
}

/// Pairs normalized and unnormalized results of the same (task, encoder,
/// protocol, classifier) and reports the headline-metric delta.
pub fn normalization_delta(results: &[EvalResult]) -> Result<Vec<DeltaRow>> {
    type Key = (String, String, String, String);
    let mut pairs: BTreeMap<Key, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for r in results {
        let score = r.metric(r.primary_metric()).ok_or_else(|| {
            Error::invalid(format!("{}/{} has no {}", r.encoder, r.task, r.primary_metric()))
        })?;
        let key = (
            r.task.clone(),
            r.encoder.clone(),
            r.protocol.as_str().to_string(),
            r.classifier.clone(),
        );
        let slot = pairs.entry(key).or_default();
        if r.normalized {
            slot.1 = Some(score);
        } else {
            slot.0 = Some(score);
        }
    }
    pairs
        .into_iter()
        .map(|((task, encoder, _, classifier), scores)| match scores {
            (Some(s), Some(n)) => Ok(DeltaRow::new(&encoder, &task, &classifier, s, n)),
            _ => Err(Error::MissingCounterpart(encoder)),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnDispersion {
    pub task: String,
    pub n: usize,
    pub range: f64,
    pub std: f64,
}

/// Range and population standard deviation of each requested column.
/// Columns with fewer than two scores report zero dispersion.
pub fn dispersion_report(table: &ScoreTable, columns: &[String]) -> Result<Vec<ColumnDispersion>> {
    columns
        .iter()
        .map(|task| {
            let values: Vec<f64> = table.column(task).into_iter().map(|(_, s)| s).collect();
            if values.is_empty() {
                return Err(Error::invalid(format!("no scores for column {task}")));
            }
            let Dispersion { range, std } = if values.len() < 2 {
                Dispersion { range: 0.0, std: 0.0 }
            } else {
                dispersion(&values)?
            };
            Ok(ColumnDispersion {
                task: task.clone(),
                n: values.len(),
                range,
                std,
            })
        })
        .collect()
}

/// Spearman correlations between transfer and probing columns, computed
/// over encoders.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub transfer: Vec<String>,
    pub probing: Vec<String>,
    /// `cells[t][p]`; `None` where a column was constant.
    pub cells: Vec<Vec<Option<f64>>>,
    /// Mean over transfer tasks for each probing task.
    pub probing_averages: Vec<Option<f64>>,
    pub grand_mean: Option<f64>,
    pub undefined_cells: usize,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Correlation of every (transfer, probing) task pair across encoders.
///
/// Each cell uses the encoders scored on both tasks. Cells with a constant
/// column are undefined and left out of every average.
pub fn transfer_probing_correlation(table: &ScoreTable) -> Result<CorrelationReport> {
    let transfer = table.tasks(TaskKind::Transfer);
    let probing = table.tasks(TaskKind::Probing);
    if transfer.is_empty() || probing.is_empty() {
        return Err(Error::invalid("table needs both transfer and probing tasks"));
    }
    let encoders = table.encoders();
    if encoders.len() < 3 {
        return Err(Error::invalid(format!(
            "correlation needs at least 3 encoders, table has {}",
            encoders.len()
        )));
    }
    let mut undefined_cells = 0;
    let mut cells = Vec::with_capacity(transfer.len());
    for t in &transfer {
        let mut row = Vec::with_capacity(probing.len());
        for p in &probing {
            let (xs, ys): (Vec<f64>, Vec<f64>) = encoders
                .iter()
                .filter_map(|e| Some((table.get(e, t)?, table.get(e, p)?)))
                .unzip();
            if xs.len() < 3 {
                return Err(Error::invalid(format!(
                    "only {} encoders scored on both {t} and {p}",
                    xs.len()
                )));
            }
            match spearman(&xs, &ys) {
                Ok(rho) => row.push(Some(rho)),
                Err(Error::DegenerateCorrelation(why)) => {
                    warn!("correlation {t} × {p} undefined: {why}");
                    undefined_cells += 1;
                    row.push(None);
                }
                Err(e) => return Err(e),
            }
        }
        cells.push(row);
    }
    let probing_averages = (0..probing.len())
        .map(|p| mean_defined(cells.iter().map(|row| row[p])))
        .collect();
    let grand_mean = mean_defined(cells.iter().flatten().copied());
    Ok(CorrelationReport {
        transfer,
        probing,
        cells,
        probing_averages,
        grand_mean,
        undefined_cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub size: usize,
    pub mean_score: f64,
    pub per_task: BTreeMap<String, f64>,
}

/// A constant-size encoder drawn as a horizontal line next to the sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceLine {
    pub encoder: String,
    pub size: usize,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeSweep {
    pub family: String,
    pub points: Vec<SweepPoint>,
    pub references: Vec<ReferenceLine>,
    pub results: Vec<EvalResult>,
}

fn mean_accuracy(
    tasks: &[(String, &LabeledDataset)],
    name: &str,
    spec: &EncoderSpec,
    classifier: &ClassifierSpec,
    normalized: bool,
    results: &mut Vec<EvalResult>,
) -> Result<(f64, BTreeMap<String, f64>)> {
    let encoder = spec.build()?;
    let mut per_task = BTreeMap::new();
    for (task, data) in tasks {
        let r = run_transfer_task(task, data, name, &encoder, classifier, normalized)?;
        per_task.insert(task.clone(), r.metric("accuracy").unwrap_or(0.0));
        results.push(r);
    }
    let mean = per_task.values().sum::<f64>() / per_task.len() as f64;
    Ok((mean, per_task))
}

/// Mean transfer accuracy (unweighted over tasks) of an encoder family at
/// each requested size, plus constant-size reference encoders.
#[allow(clippy::too_many_arguments)]
pub fn size_sweep(
    family: &str,
    tasks: &[(String, &LabeledDataset)],
    generator: impl Fn(usize) -> Result<EncoderSpec>,
    sizes: &[usize],
    references: &[(String, EncoderSpec)],
    classifier: &ClassifierSpec,
    normalized: bool,
) -> Result<SizeSweep> {
    if tasks.is_empty() {
        return Err(Error::invalid("size sweep needs at least one task"));
    }
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("sweep sizes must be non-empty and strictly increasing"));
    }
    let mut results = Vec::new();
    let mut points = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let spec = generator(size)?;
        if spec.output_dim() != size {
            return Err(Error::DimensionMismatch {
                expected: size,
                found: spec.output_dim(),
            });
        }
        let name = format!("{family}-{size}");
        let (mean_score, per_task) =
            mean_accuracy(tasks, &name, &spec, classifier, normalized, &mut results)?;
        points.push(SweepPoint {
            size,
            mean_score,
            per_task,
        });
    }
    let mut lines = Vec::with_capacity(references.len());
    for (name, spec) in references {
        let (mean_score, _) = mean_accuracy(tasks, name, spec, classifier, normalized, &mut results)?;
        lines.push(ReferenceLine {
            encoder: name.clone(),
            size: spec.output_dim(),
            mean_score,
        });
    }
    Ok(SizeSweep {
        family: family.to_string(),
        points,
        references: lines,
        results,
    })
}

/// MLP-over-logistic-regression accuracy gain for one (task, encoder,
/// normalization) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierGain {
    pub task: String,
    pub encoder: String,
    pub normalized: bool,
    pub logreg: f64,
    pub mlp: f64,
    pub gain_pp: f64,
}

/// Pairs classification results that differ only in the classifier. Cells
/// lacking one of the two classifiers are left out.
pub fn classifier_gains(results: &[EvalResult]) -> Vec<ClassifierGain> {
    let mut pairs: BTreeMap<(String, String, bool), (Option<f64>, Option<f64>)> = BTreeMap::new();
    for r in results {
        let Some(acc) = r.metric("accuracy") else { continue };
        let slot = pairs
            .entry((r.task.clone(), r.encoder.clone(), r.normalized))
            .or_default();
        match r.classifier.parse::<ClassifierKind>() {
            Ok(ClassifierKind::LogisticRegression) => slot.0 = Some(acc),
            Ok(ClassifierKind::Mlp) => slot.1 = Some(acc),
            Err(_) => {}
        }
    }
    pairs
        .into_iter()
        .filter_map(|((task, encoder, normalized), (l, m))| {
            let (logreg, mlp) = (l?, m?);
            Some(ClassifierGain {
                task,
                encoder,
                normalized,
                logreg,
                mlp,
                gain_pp: 100.0 * (mlp - logreg),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_examples() {
        assert!((delta_pp(0.41, 0.62) - 21.0).abs() < 1e-9);
        assert_eq!(delta_pp(0.67, 0.67), 0.0);
        let row = DeltaRow::new("glove", "sts", "cosine", 0.41, 0.62);
        assert!((row.chart_value(true, true) - 2.1).abs() < 1e-9);
        assert_eq!(row.chart_value(false, true), row.delta_pp);
    }

    #[test]
    fn table_rejects_duplicates_and_kind_conflicts() {
        let mut t = ScoreTable::new(Provenance::Internal);
        t.insert("a", "mr", TaskKind::Transfer, 0.5).unwrap();
        assert!(t.insert("a", "mr", TaskKind::Transfer, 0.6).is_err());
        assert!(t.insert("b", "mr", TaskKind::Probing, 0.6).is_err());
    }

    #[test]
    fn single_encoder_dispersion() {
        let mut t = ScoreTable::new(Provenance::Internal);
        t.insert("a", "x", TaskKind::Transfer, 0.5).unwrap();
        let d = dispersion_report(&t, &["x".to_string()]).unwrap();
        assert_eq!(d[0].range, 0.0);
    }

    #[test]
    fn correlation_needs_three_encoders() {
        let mut t = ScoreTable::new(Provenance::Internal);
        for (e, a, b) in [("e1", 1.0, 2.0), ("e2", 2.0, 3.0)] {
            t.insert(e, "t", TaskKind::Transfer, a).unwrap();
            t.insert(e, "p", TaskKind::Probing, b).unwrap();
        }
        assert!(transfer_probing_correlation(&t).is_err());
    }

    #[test]
    fn constant_column_is_undefined() {
        let mut t = ScoreTable::new(Provenance::Internal);
        for (e, a, b, c) in [("e1", 1.0, 2.0, 0.5), ("e2", 2.0, 3.0, 0.5), ("e3", 3.0, 1.0, 0.5)] {
            t.insert(e, "t", TaskKind::Transfer, a).unwrap();
            t.insert(e, "p", TaskKind::Probing, b).unwrap();
            t.insert(e, "flat", TaskKind::Probing, c).unwrap();
        }
        let r = transfer_probing_correlation(&t).unwrap();
        assert_eq!(r.probing, vec!["flat", "p"]);
        assert_eq!(r.cells[0][0], None);
        assert_eq!(r.undefined_cells, 1);
        assert_eq!(r.grand_mean, r.cells[0][1]);
    }
}
