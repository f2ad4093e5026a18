//! CSV outputs: results, diagnostics and the analysis tables.

use std::collections::BTreeMap;
use std::path::Path;

use embeval::analysis::{
    classifier_gains, normalization_delta, transfer_probing_correlation, CorrelationReport,
    DeltaRow, ScoreTable, SizeSweep, TaskKind,
};
use embeval::compose::Diagnostics;
use embeval::evaluators::{EvalResult, Protocol};
use embeval::metrics::dispersion;

use crate::execute::result_key;

pub const RESULTS_HEADER: [&str; 9] = [
    "task",
    "encoder",
    "dim",
    "protocol",
    "classifier",
    "normalized",
    "metric",
    "value",
    "hyperparams",
];

/// Number as shown in charts and their CSVs: two decimals, trailing zeros
/// trimmed.
pub fn fmt_num(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// One row per metric, in (task, encoder, protocol, classifier,
/// normalized, metric) order.
pub fn results_csv<'a>(results: impl IntoIterator<Item = &'a EvalResult>) -> String {
    let mut sorted: Vec<&EvalResult> = results.into_iter().collect();
    sorted.sort_by_key(|r| result_key(r));
    let rows = sorted.into_iter().flat_map(|r| {
        r.metrics.iter().map(move |(metric, value)| {
            vec![
                r.task.clone(),
                r.encoder.clone(),
                r.embedding_size.to_string(),
                r.protocol.to_string(),
                r.classifier.clone(),
                r.normalized.to_string(),
                metric.clone(),
                value.to_string(),
                r.hyperparams_string(),
            ]
        })
    });
    csv_string(&RESULTS_HEADER, rows)
}

pub fn diagnostics_csv<'a>(results: impl IntoIterator<Item = &'a EvalResult>) -> String {
    let mut sorted: Vec<&EvalResult> = results.into_iter().collect();
    sorted.sort_by_key(|r| result_key(r));
    let rows = sorted.into_iter().map(|r| {
        let d = r.diagnostics;
        vec![
            r.task.clone(),
            r.encoder.clone(),
            r.protocol.to_string(),
            r.classifier.clone(),
            r.normalized.to_string(),
            r.converged.to_string(),
            d.sentences.to_string(),
            d.empty_sentences.to_string(),
            d.tokens.to_string(),
            d.oov_tokens.to_string(),
        ]
    });
    csv_string(
        &[
            "task",
            "encoder",
            "protocol",
            "classifier",
            "normalized",
            "converged",
            "sentences",
            "empty_sentences",
            "tokens",
            "oov_tokens",
        ],
        rows,
    )
}

fn file_error(path: &Path, e: impl std::fmt::Display) -> String {
    format!("{}: {e}", path.display())
}

/// Reads a results CSV back into one result per cell. Diagnostics are not
/// part of the file and come back empty.
pub fn read_results(path: &Path) -> Result<Vec<EvalResult>, String> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| file_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| file_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != RESULTS_HEADER {
        return Err(file_error(path, format!("expected header {}", RESULTS_HEADER.join(","))));
    }
    let mut cells: BTreeMap<_, EvalResult> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let rec = record.map_err(|e| file_error(path, e))?;
        let bad = |what: &str| file_error(path, format!("line {line}: invalid {what}"));
        let protocol: Protocol = rec[3].parse().map_err(|_| bad("protocol"))?;
        let normalized: bool = rec[5].parse().map_err(|_| bad("normalized"))?;
        let dim: usize = rec[2].parse().map_err(|_| bad("dim"))?;
        let value: f64 = rec[7].parse().map_err(|_| bad("value"))?;
        let key = (
            rec[0].to_string(),
            rec[1].to_string(),
            protocol,
            rec[4].to_string(),
            normalized,
        );
        let hyperparams: BTreeMap<String, String> = rec[8]
            .split(';')
            .filter(|kv| !kv.is_empty())
            .map(|kv| {
                let (k, v) = kv.split_once('=').unwrap_or((kv, ""));
                (k.to_string(), v.to_string())
            })
            .collect();
        let cell = cells.entry(key).or_insert_with(|| EvalResult {
            task: rec[0].to_string(),
            encoder: rec[1].to_string(),
            embedding_size: dim,
            protocol,
            classifier: rec[4].to_string(),
            normalized,
            metrics: BTreeMap::new(),
            hyperparams,
            converged: true,
            diagnostics: Diagnostics::default(),
        });
        if cell.metrics.insert(rec[6].to_string(), value).is_some() {
            return Err(bad("duplicate metric"));
        }
    }
    Ok(cells.into_values().collect())
}

/// Reads `task,encoder,classifier,standard,normalized` rows as a pair of
/// results each.
pub fn read_paired(path: &Path) -> Result<Vec<EvalResult>, String> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| file_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| file_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| file_error(path, format!("missing column {name}")))
    };
    let (ti, ei, ci, si, ni) = (
        col("task")?,
        col("encoder")?,
        col("classifier")?,
        col("standard")?,
        col("normalized")?,
    );
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let rec = record.map_err(|e| file_error(path, e))?;
        let classifier = rec[ci].to_string();
        let protocol = match classifier.as_str() {
            "cosine" => Protocol::Ucp,
            "ridge" => Protocol::LearnedSim,
            _ => Protocol::Classify,
        };
        for (idx, normalized) in [(si, false), (ni, true)] {
            let value: f64 = rec[idx]
                .parse()
                .map_err(|_| file_error(path, format!("line {line}: invalid score")))?;
            let mut r = EvalResult {
                task: rec[ti].to_string(),
                encoder: rec[ei].to_string(),
                embedding_size: 0,
                protocol,
                classifier: classifier.clone(),
                normalized,
                metrics: BTreeMap::new(),
                hyperparams: BTreeMap::new(),
                converged: true,
                diagnostics: Diagnostics::default(),
            };
            r.metrics.insert(r.primary_metric().to_string(), value);
            out.push(r);
        }
    }
    Ok(out)
}

pub fn is_similarity_classifier(classifier: &str) -> bool {
    matches!(classifier, "cosine" | "ridge")
}

/// Deltas of every cell evaluated both with and without normalization.
pub fn deltas(results: &[EvalResult]) -> embeval::Result<Vec<DeltaRow>> {
    let mut flags: BTreeMap<_, (bool, bool)> = BTreeMap::new();
    for r in results {
        let (t, e, p, c, n) = result_key(r);
        let slot = flags.entry((t, e, p, c)).or_default();
        if n {
            slot.1 = true;
        } else {
            slot.0 = true;
        }
    }
    let paired: Vec<EvalResult> = results
        .iter()
        .filter(|r| {
            let (t, e, p, c, _) = result_key(r);
            flags[&(t, e, p, c)] == (true, true)
        })
        .cloned()
        .collect();
    normalization_delta(&paired)
}

pub fn deltas_csv(rows: &[DeltaRow]) -> String {
    csv_string(
        &["task", "encoder", "classifier", "standard", "normalized", "delta_pp"],
        rows.iter().map(|d| {
            vec![
                d.task.clone(),
                d.encoder.clone(),
                d.classifier.clone(),
                d.standard.to_string(),
                d.normalized.to_string(),
                fmt_num(d.delta_pp),
            ]
        }),
    )
}

/// Range and population standard deviation of the headline score across
/// encoders, per (task, classifier, normalized) column.
pub fn dispersion_csv(results: &[EvalResult]) -> embeval::Result<String> {
    let mut columns: BTreeMap<(String, String, bool), Vec<f64>> = BTreeMap::new();
    for r in results {
        if let Some(v) = r.metric(r.primary_metric()) {
            columns
                .entry((r.task.clone(), r.classifier.clone(), r.normalized))
                .or_default()
                .push(v);
        }
    }
    let mut rows = Vec::new();
    for ((task, classifier, normalized), values) in columns {
        let (range, std) = if values.len() < 2 {
            (0.0, 0.0)
        } else {
            let d = dispersion(&values)?;
            (d.range, d.std)
        };
        rows.push(vec![
            task,
            classifier,
            normalized.to_string(),
            values.len().to_string(),
            range.to_string(),
            std.to_string(),
        ]);
    }
    Ok(csv_string(
        &["task", "classifier", "normalized", "n", "range", "std"],
        rows,
    ))
}

pub fn classifier_gains_csv(results: &[EvalResult]) -> String {
    csv_string(
        &["task", "encoder", "normalized", "logreg", "mlp", "gain_pp"],
        classifier_gains(results).into_iter().map(|g| {
            vec![
                g.task,
                g.encoder,
                g.normalized.to_string(),
                g.logreg.to_string(),
                g.mlp.to_string(),
                fmt_num(g.gain_pp),
            ]
        }),
    )
}

pub const CORRELATION_HEADER: [&str; 3] = ["transfer", "probing", "spearman"];

/// Cell table followed by per-probing averages and the grand mean, which
/// use `*` in the transfer column. Undefined values are left empty.
pub fn correlation_csv(report: &CorrelationReport) -> String {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut rows = Vec::new();
    for (t, row) in report.transfer.iter().zip(&report.cells) {
        for (p, v) in report.probing.iter().zip(row) {
            rows.push(vec![t.clone(), p.clone(), opt(*v)]);
        }
    }
    for (p, v) in report.probing.iter().zip(&report.probing_averages) {
        rows.push(vec!["*".into(), p.clone(), opt(*v)]);
    }
    rows.push(vec!["*".into(), "*".into(), opt(report.grand_mean)]);
    csv_string(&CORRELATION_HEADER, rows)
}

/// Headline classification scores of one classifier setting, tagged with
/// task roles. Tasks without a role are left out.
pub fn correlation_table(
    results: &[EvalResult],
    roles: &BTreeMap<String, TaskKind>,
    classifier: &str,
    normalized: bool,
) -> embeval::Result<ScoreTable> {
    let selected: Vec<EvalResult> = results
        .iter()
        .filter(|r| {
            r.protocol == Protocol::Classify
                && r.classifier == classifier
                && r.normalized == normalized
                && roles.contains_key(&r.task)
        })
        .cloned()
        .collect();
    ScoreTable::from_results(&selected, |t| roles[t])
}

pub fn correlation_from_table(table: &ScoreTable) -> embeval::Result<String> {
    Ok(correlation_csv(&transfer_probing_correlation(table)?))
}

pub fn sweep_csv(sweep: &SizeSweep) -> String {
    let mut rows: Vec<Vec<String>> = sweep
        .points
        .iter()
        .map(|p| {
            vec![
                "sweep".into(),
                sweep.family.clone(),
                p.size.to_string(),
                p.mean_score.to_string(),
            ]
        })
        .collect();
    rows.extend(sweep.references.iter().map(|r| {
        vec![
            "reference".into(),
            r.encoder.clone(),
            r.size.to_string(),
            r.mean_score.to_string(),
        ]
    }));
    csv_string(&["kind", "series", "size", "mean_score"], rows)
}

/// Which analysis tables to produce.
#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub deltas: bool,
    pub dispersion: bool,
    pub classifier_gains: bool,
    /// `(classifier, normalized)` for the transfer/probing correlation.
    pub correlation: Option<(String, bool)>,
    pub roles: BTreeMap<String, TaskKind>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            deltas: true,
            dispersion: true,
            classifier_gains: true,
            correlation: None,
            roles: BTreeMap::new(),
        }
    }
}

/// Analysis files as `(file name, contents)`, in name order.
pub fn analysis_files(
    results: &[EvalResult],
    opts: &AnalysisOptions,
) -> embeval::Result<Vec<(String, String)>> {
    let mut files = BTreeMap::new();
    if opts.deltas {
        files.insert("deltas.csv".to_string(), deltas_csv(&deltas(results)?));
    }
    if opts.dispersion {
        files.insert("dispersion.csv".to_string(), dispersion_csv(results)?);
    }
    if opts.classifier_gains {
        files.insert("classifier_gains.csv".to_string(), classifier_gains_csv(results));
    }
    if let Some((classifier, normalized)) = &opts.correlation {
        let table = correlation_table(results, &opts.roles, classifier, *normalized)?;
        files.insert("correlation.csv".to_string(), correlation_from_table(&table)?);
    }
    Ok(files.into_iter().collect())
}
