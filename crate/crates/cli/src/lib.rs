//! Command-line runner: validates a run config, evaluates every cell in
//! parallel, and writes results, analysis tables and charts.

pub mod config;
pub mod execute;
pub mod plot;
pub mod report;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use embeval::analysis::{transfer_probing_correlation, ScoreTable, TaskKind};
use embeval::evaluators::EvalResult;
use serde_json::json;

use crate::config::{RunConfig, TaskKindConfig, TaskRole, ValidationError};
use crate::execute::{execute, Resources};
use crate::plot::Series;
use crate::report::AnalysisOptions;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "embeval", version, about = "Sentence-embedding evaluation runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a config without reading any data.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate every configured cell and write the output tables.
    Run(RunArgs),
    /// Recompute analysis tables from existing results or score tables.
    Analyze(AnalyzeArgs),
    /// Draw charts from analysis tables.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// A results CSV written by `run`.
    #[arg(long, conflicts_with_all = ["table", "paired"])]
    results: Option<PathBuf>,
    /// An `encoder,task,kind,score` table for the correlation analysis.
    #[arg(long, conflicts_with = "paired")]
    table: Option<PathBuf>,
    /// `task,encoder,classifier,standard,normalized` rows.
    #[arg(long)]
    paired: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Directory that receives the charts.
    #[arg(long)]
    out: PathBuf,
    /// Directory holding analysis CSVs; defaults to `--out`.
    #[arg(long)]
    from: Option<PathBuf>,
    /// Draw the delta chart from a paired-score file instead.
    #[arg(long)]
    paired: Option<PathBuf>,
    /// Draw the heatmap from an `encoder,task,kind,score` table instead.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Divide similarity-task deltas by ten.
    #[arg(long)]
    scale_similarity: bool,
}

#[derive(Debug)]
pub enum CliError {
    Validation(Vec<String>),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Validation(problems) => json!({
                "status": "validation_error",
                "exit_code": EXIT_VALIDATION,
                "problems": problems,
            }),
            CliError::Runtime(message) => json!({
                "status": "runtime_error",
                "exit_code": EXIT_RUNTIME,
                "message": message,
            }),
        }
    }
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        CliError::Validation(e.problems)
    }
}

impl From<embeval::Error> for CliError {
    fn from(e: embeval::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Errors are reported on stderr as one JSON object.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Run(args) => cmd_run(&args),
        Command::Analyze(args) => cmd_analyze(&args).map(|_| EXIT_OK),
        Command::Plot(args) => cmd_plot(&args).map(|_| EXIT_OK),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

fn load_valid(path: &Path) -> Result<RunConfig, CliError> {
    let config = RunConfig::load(path)?;
    config.validate()?;
    Ok(config)
}

fn cmd_validate(path: &Path) -> Result<i32, CliError> {
    load_valid(path)?;
    println!("{}", json!({"status": "ok", "config": path.display().to_string()}));
    Ok(EXIT_OK)
}

/// Task roles for the correlation analysis; classification tasks default
/// to transfer.
fn roles(config: &RunConfig) -> BTreeMap<String, TaskKind> {
    config
        .tasks
        .iter()
        .filter(|t| t.kind == TaskKindConfig::Classification)
        .map(|t| {
            let kind = match t.role {
                Some(TaskRole::Probing) => TaskKind::Probing,
                _ => TaskKind::Transfer,
            };
            (t.name.clone(), kind)
        })
        .collect()
}

/// Runs a validated config and returns the output files without writing
/// them, plus the cells whose optimizer did not converge.
pub fn run_to_files(
    config: &RunConfig,
    workers: usize,
) -> Result<(Vec<(String, String)>, Vec<String>), CliError> {
    let resources = Resources::load(config)?;
    let output = execute(config, &resources, workers)?;
    let results: Vec<EvalResult> = output.results.values().cloned().collect();
    let mut files = vec![
        ("results.csv".to_string(), report::results_csv(&results)),
        ("diagnostics.csv".to_string(), report::diagnostics_csv(&results)),
    ];
    let a = &config.analysis;
    let opts = AnalysisOptions {
        deltas: a.deltas,
        dispersion: a.dispersion,
        classifier_gains: a.classifier_gains,
        correlation: a
            .correlation
            .then(|| (a.correlation_classifier.clone(), a.correlation_normalized)),
        roles: roles(config),
    };
    files.extend(report::analysis_files(&results, &opts)?);
    for s in &output.sweeps {
        files.push((format!("sweep_{}.csv", s.family), report::sweep_csv(s)));
    }
    let non_converged = results
        .iter()
        .filter(|r| !r.converged)
        .map(|r| format!("{}/{}/{}/{}/normalized={}", r.task, r.encoder, r.protocol, r.classifier, r.normalized))
        .collect();
    Ok((files, non_converged))
}

fn write_files(dir: &Path, files: &[(String, String)]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    for (name, contents) in files {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<i32, CliError> {
    let mut config = RunConfig::load(&args.config)?;
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    if args.workers.is_some() {
        config.workers = args.workers;
    }
    let out = args.out.clone().or_else(|| config.output.as_ref().map(|o| config.resolve(o)));
    let mut problems = match config.validate() {
        Ok(()) => Vec::new(),
        Err(e) => e.problems,
    };
    match &out {
        None => problems.push("no output directory: pass --out or set `output`".into()),
        Some(dir) if dir.exists() && !dir.is_dir() => {
            problems.push(format!("output {} is not a directory", dir.display()))
        }
        _ => {}
    }
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    let out = out.expect("checked above");
    let workers = config.workers.unwrap_or_else(|| {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    });

    let (files, non_converged) = run_to_files(&config, workers)?;
    write_files(&out, &files)?;
    if non_converged.is_empty() {
        println!(
            "{}",
            json!({"status": "ok", "out": out.display().to_string(), "files": files.iter().map(|f| &f.0).collect::<Vec<_>>()})
        );
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "{}",
            json!({"status": "partial", "exit_code": EXIT_PARTIAL, "non_converged": non_converged})
        );
        Ok(EXIT_PARTIAL)
    }
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let files = if let Some(path) = &args.results {
        let results = report::read_results(path).map_err(bad_input)?;
        report::analysis_files(&results, &AnalysisOptions::default())?
    } else if let Some(path) = &args.paired {
        let results = report::read_paired(path).map_err(bad_input)?;
        let opts = AnalysisOptions {
            classifier_gains: false,
            ..AnalysisOptions::default()
        };
        report::analysis_files(&results, &opts)?
    } else if let Some(path) = &args.table {
        let table = ScoreTable::from_csv(path).map_err(|e| CliError::Validation(vec![e.to_string()]))?;
        vec![("correlation.csv".to_string(), report::correlation_from_table(&table)?)]
    } else {
        return Err(CliError::Validation(vec![
            "analyze needs one of --results, --table or --paired".into(),
        ]));
    };
    write_files(&args.out, &files)?;
    println!("{}", json!({"status": "ok", "out": args.out.display().to_string()}));
    Ok(())
}

fn bad_input(message: String) -> CliError {
    CliError::Validation(vec![message])
}

fn read_csv_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let err = |e: csv::Error| CliError::Validation(vec![format!("{}: {e}", path.display())]);
    let mut reader = csv::Reader::from_path(path).map_err(err)?;
    let header = reader.headers().map_err(err)?.iter().map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    Ok((header, rows))
}

fn parse_f64(path: &Path, s: &str) -> Result<f64, CliError> {
    s.parse()
        .map_err(|_| CliError::Validation(vec![format!("{}: invalid number {s:?}", path.display())]))
}

/// Deltas as stored in a `deltas.csv`.
fn read_deltas(path: &Path) -> Result<Vec<embeval::analysis::DeltaRow>, CliError> {
    let (header, rows) = read_csv_rows(path)?;
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Validation(vec![format!("{}: missing column {name}", path.display())])
        })
    };
    let (t, e, c, s, n) = (col("task")?, col("encoder")?, col("classifier")?, col("standard")?, col("normalized")?);
    rows.iter()
        .map(|r| {
            Ok(embeval::analysis::DeltaRow::new(
                &r[e],
                &r[t],
                &r[c],
                parse_f64(path, &r[s])?,
                parse_f64(path, &r[n])?,
            ))
        })
        .collect()
}

/// Rebuilds a correlation report from `correlation.csv` cell rows.
fn read_correlation(path: &Path) -> Result<embeval::analysis::CorrelationReport, CliError> {
    let (_, rows) = read_csv_rows(path)?;
    let mut transfer: Vec<String> = Vec::new();
    let mut probing: Vec<String> = Vec::new();
    let mut values = BTreeMap::new();
    for r in rows.iter().filter(|r| r.len() == 3 && r[0] != "*") {
        if !transfer.contains(&r[0]) {
            transfer.push(r[0].clone());
        }
        if !probing.contains(&r[1]) {
            probing.push(r[1].clone());
        }
        let v = if r[2].is_empty() { None } else { Some(parse_f64(path, &r[2])?) };
        values.insert((r[0].clone(), r[1].clone()), v);
    }
    let cells: Vec<Vec<Option<f64>>> = transfer
        .iter()
        .map(|t| {
            probing
                .iter()
                .map(|p| values.get(&(t.clone(), p.clone())).copied().flatten())
                .collect()
        })
        .collect();
    let undefined_cells = cells.iter().flatten().filter(|v| v.is_none()).count();
    Ok(embeval::analysis::CorrelationReport {
        transfer,
        probing,
        probing_averages: Vec::new(),
        grand_mean: None,
        cells,
        undefined_cells,
    })
}

fn read_sweep(path: &Path) -> Result<Vec<Series>, CliError> {
    let (_, rows) = read_csv_rows(path)?;
    let mut series: Vec<Series> = Vec::new();
    for r in rows {
        if r.len() != 4 {
            return Err(CliError::Validation(vec![format!("{}: expected 4 columns", path.display())]));
        }
        let size: usize = r[2]
            .parse()
            .map_err(|_| CliError::Validation(vec![format!("{}: invalid size", path.display())]))?;
        let v = parse_f64(path, &r[3])?;
        match series.iter_mut().find(|s| s.kind == r[0] && s.name == r[1]) {
            Some(s) => s.points.push((size, v)),
            None => series.push(Series {
                kind: r[0].clone(),
                name: r[1].clone(),
                points: vec![(size, v)],
            }),
        }
    }
    Ok(series)
}

/// Chart files `(name, contents)` for whatever inputs are available.
pub fn plot_files(
    from: &Path,
    paired: Option<&Path>,
    table: Option<&Path>,
    scale_similarity: bool,
) -> Result<Vec<(String, String)>, CliError> {
    let mut files = Vec::new();
    let deltas = match paired {
        Some(p) => {
            let results = report::read_paired(p).map_err(bad_input)?;
            Some(report::deltas(&results)?)
        }
        None => {
            let p = from.join("deltas.csv");
            p.is_file().then(|| read_deltas(&p)).transpose()?
        }
    };
    if let Some(rows) = deltas {
        let (svg, csv) = plot::delta_chart(&rows, scale_similarity);
        files.push(("delta_chart.svg".to_string(), svg));
        files.push(("delta_chart.csv".to_string(), csv));
    }
    let correlation = match table {
        Some(t) => {
            let table = ScoreTable::from_csv(t).map_err(|e| CliError::Validation(vec![e.to_string()]))?;
            Some(transfer_probing_correlation(&table)?)
        }
        None => {
            let p = from.join("correlation.csv");
            p.is_file().then(|| read_correlation(&p)).transpose()?
        }
    };
    if let Some(report) = correlation {
        let (svg, csv) = plot::heatmap(&report);
        files.push(("correlation_heatmap.svg".to_string(), svg));
        files.push(("correlation_heatmap.csv".to_string(), csv));
    }
    if from.is_dir() {
        let mut sweeps: Vec<PathBuf> = fs::read_dir(from)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", from.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                name.starts_with("sweep_") && name.ends_with(".csv") && !name.ends_with("_chart.csv")
            })
            .collect();
        sweeps.sort();
        for p in sweeps {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep").to_string();
            let family = stem.trim_start_matches("sweep_");
            let (svg, csv) = plot::sweep_chart(&format!("Size sweep: {family}"), &read_sweep(&p)?);
            files.push((format!("{stem}_chart.svg"), svg));
            files.push((format!("{stem}_chart.csv"), csv));
        }
    }
    if files.is_empty() {
        return Err(CliError::Validation(vec![format!(
            "nothing to plot: {} has no deltas.csv, correlation.csv or sweep tables",
            from.display()
        )]));
    }
    Ok(files)
}

fn cmd_plot(args: &PlotArgs) -> Result<(), CliError> {
    let from = args.from.clone().unwrap_or_else(|| args.out.clone());
    let files = plot_files(&from, args.paired.as_deref(), args.table.as_deref(), args.scale_similarity)?;
    write_files(&args.out, &files)?;
    println!(
        "{}",
        json!({"status": "ok", "files": files.iter().map(|f| &f.0).collect::<Vec<_>>()})
    );
    Ok(())
}
