//! Multi-seed comparison harness: run every configured pruning algorithm
//! from the same initializations, aggregate the per-seed outcomes, select
//! the best structure, and emit machine- and human-readable reports.
//!
//! The protocol of [`run_experiment`]:
//!
//! 1. Build the seed list `base_seed .. base_seed + n_seeds`.
//! 2. Per seed: draw one Nguyen-Widrow initialization of the
//!    `initial_hidden`-unit network (ranges taken from the standardized
//!    training inputs), train it once, then hand clones of the *same trained
//!    model* to every algorithm. All algorithms therefore consume
//!    bit-identical initial parameters — the shared-initialization contract.
//! 3. Any failure (initialization, training, or one algorithm's pruning) is
//!    recorded per seed and surfaced in the reports; failed runs are excluded
//!    from the aggregates but never dropped silently.
//!
//! Seeds run in parallel (bounded by `parallelism`, 0 = automatic); results
//! are merged in seed order, so the summary is identical at any parallelism
//! level. Wall-clock times are reported but are the one metric excluded from
//! determinism guarantees.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::GeneratorConfig;
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::prune::{run_algorithm, Algorithm, PruneConfig, PruneReport};
use crate::scalar::Scalar;
use crate::train::{input_ranges, levenberg_marquardt, nguyen_widrow_init, TrainConfig};

/// Where the experiment's dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// Load a CSV file; `split_seed` drives the 2:1 split when the file has
    /// no explicit split column.
    Csv {
        path: PathBuf,
        target: String,
        #[serde(default)]
        split_seed: u64,
    },
    /// Generate a synthetic dataset.
    Generator(GeneratorConfig),
}

impl DatasetSource {
    pub fn resolve<F: Scalar>(&self) -> Result<Dataset<F>> {
        match self {
            DatasetSource::Csv { path, target, split_seed } => {
                Dataset::load_csv(path, target, *split_seed)
            }
            DatasetSource::Generator(config) => crate::datagen::generate(config),
        }
    }
}

/// Full description of one experiment. All fields have serde defaults, so a
/// config file only names what it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Number of independent initializations.
    pub n_seeds: usize,
    /// First seed; seed `k` of the experiment is `base_seed + k`.
    pub base_seed: u64,
    /// Algorithms to compare, in report order. No duplicates.
    pub algorithms: Vec<Algorithm>,
    /// Hidden-layer width of the starting network.
    pub initial_hidden: usize,
    /// Worker-thread bound for the seed loop; 0 picks the machine default.
    pub parallelism: usize,
    /// Dataset to run on; optional here because [`run_experiment_on`] can be
    /// handed a dataset directly.
    pub dataset: Option<DatasetSource>,
    pub train: TrainConfig,
    pub prune: PruneConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_seeds: 50,
            base_seed: 1,
            algorithms: Algorithm::ALL.to_vec(),
            initial_hidden: 25,
            parallelism: 0,
            dataset: None,
            train: TrainConfig::default(),
            prune: PruneConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::InvalidConfig("n_seeds must be at least 1".into()));
        }
        if self.initial_hidden == 0 {
            return Err(Error::InvalidConfig("initial_hidden must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidConfig("algorithms must not be empty".into()));
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                return Err(Error::InvalidConfig(format!("duplicate algorithm `{a}`")));
            }
        }
        self.train.validate()?;
        self.prune.validate()?;
        Ok(())
    }

    /// The seed list this config spans.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|k| self.base_seed + k).collect()
    }
}

/// One successful (algorithm, seed) outcome.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub report: PruneReport,
}

/// One failed (algorithm, seed) outcome. `algorithm` is `None` when the
/// shared initialization or training failed, which takes the whole seed down.
#[derive(Debug, Clone)]
pub struct FailureRecord {
    pub algorithm: Option<Algorithm>,
    pub seed: u64,
    pub message: String,
}

/// `(min, mean, max)` plus the share of values strictly below / strictly
/// above the mean, in percent rounded to one decimal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub pct_below: f64,
    pub pct_above: f64,
}

/// Aggregates of one metric across the successful seeds of one algorithm.
#[derive(Debug, Clone)]
pub struct MetricAggregate {
    /// Name from [`METRIC_NAMES`].
    pub metric: &'static str,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone)]
pub struct AlgorithmAggregates {
    pub algorithm: Algorithm,
    pub n_succeeded: usize,
    pub n_failed: usize,
    /// One entry per [`METRIC_NAMES`] element; empty when no seed succeeded.
    pub metrics: Vec<MetricAggregate>,
}

/// Everything an experiment produced, in deterministic order.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub seeds: Vec<u64>,
    /// Per seed, the shared initial parameter vector handed to training
    /// (`None` if the initialization itself failed).
    pub initial_params: Vec<Option<Vec<f64>>>,
    /// Successful runs, grouped by algorithm in config order, seeds ascending.
    pub runs: Vec<RunRecord>,
    pub failures: Vec<FailureRecord>,
    /// One entry per configured algorithm, in config order.
    pub aggregates: Vec<AlgorithmAggregates>,
}

/// Metric names, in the human-table row order.
pub const METRIC_NAMES: [&str; 10] = [
    "Nb_I",
    "Nb_H",
    "Nb_theta",
    "NSSE_ID",
    "NSSE_val",
    "temps_s",
    "err_mean_ID",
    "err_std_ID",
    "err_mean_val",
    "err_std_val",
];

/// Display labels for the human tables, aligned with [`METRIC_NAMES`].
const METRIC_LABELS: [&str; 10] = [
    "Nb_I",
    "Nb_H",
    "Nb_θ",
    "NSSE_ID",
    "NSSE_val",
    "temps (s)",
    "moyenne erreur ID",
    "écart-type erreur ID",
    "moyenne erreur val",
    "écart-type erreur val",
];

fn metric_value(report: &PruneReport, metric: usize) -> f64 {
    match metric {
        0 => report.n_inputs as f64,
        1 => report.n_hidden as f64,
        2 => report.n_params as f64,
        3 => report.nsse_train,
        4 => report.nsse_validation,
        5 => report.wall_time_s,
        6 => report.error_mean_train,
        7 => report.error_std_train,
        8 => report.error_mean_validation,
        9 => report.error_std_validation,
        _ => unreachable!("metric index out of range"),
    }
}

/// Min / mean / max plus the strictly-below-mean and strictly-above-mean
/// shares in percent, rounded to one decimal. Values equal to the mean count
/// toward neither share.
pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("cannot aggregate an empty value list".into()));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    let mean = sum / values.len() as f64;
    let below = values.iter().filter(|&&v| v < mean).count();
    let above = values.iter().filter(|&&v| v > mean).count();
    let pct = |count: usize| (count as f64 / values.len() as f64 * 1000.0).round() / 10.0;
    Ok(Aggregate {
        min,
        mean,
        max,
        pct_below: pct(below),
        pct_above: pct(above),
    })
}

struct SeedOutcome {
    initial_params: Option<Vec<f64>>,
    records: Vec<RunRecord>,
    failures: Vec<FailureRecord>,
}

fn run_seed<F: Scalar>(
    seed: u64,
    dataset: &Dataset<F>,
    ranges: &[(F, F)],
    config: &ExperimentConfig,
) -> SeedOutcome {
    let mut outcome = SeedOutcome {
        initial_params: None,
        records: Vec::new(),
        failures: Vec::new(),
    };
    let init = match nguyen_widrow_init::<F>(dataset.n_inputs(), config.initial_hidden, ranges, seed)
    {
        Ok(m) => m,
        Err(e) => {
            outcome.failures.push(FailureRecord {
                algorithm: None,
                seed,
                message: format!("initialization failed: {e}"),
            });
            return outcome;
        }
    };
    outcome.initial_params =
        Some(init.active_params().into_iter().map(Scalar::into_f64).collect());
    let trained = match levenberg_marquardt(&init, dataset, &config.train) {
        Ok((m, _)) => m,
        Err(e) => {
            outcome.failures.push(FailureRecord {
                algorithm: None,
                seed,
                message: format!("training failed: {e}"),
            });
            return outcome;
        }
    };
    for &algorithm in &config.algorithms {
        match run_algorithm(algorithm, &trained, dataset, &config.train, &config.prune) {
            Ok((_, report)) => outcome.records.push(RunRecord { algorithm, seed, report }),
            Err(e) => outcome.failures.push(FailureRecord {
                algorithm: Some(algorithm),
                seed,
                message: format!("pruning failed: {e}"),
            }),
        }
    }
    outcome
}

/// Runs the full protocol on an already-resolved dataset.
pub fn run_experiment_on<F: Scalar>(
    dataset: &Dataset<F>,
    config: &ExperimentConfig,
) -> Result<ExperimentSummary> {
    config.validate()?;
    if dataset.split_indices(Split::Validation).is_empty() {
        return Err(Error::EmptySplit("validation"));
    }

    // Nguyen-Widrow ranges from the standardized training inputs.
    let ranges = input_ranges(dataset)?;

    let seeds = config.seeds();
    let work = |seeds: &[u64]| -> Vec<SeedOutcome> {
        seeds
            .par_iter()
            .map(|&seed| run_seed(seed, dataset, &ranges, config))
            .collect()
    };
    let outcomes = if config.parallelism == 0 {
        work(&seeds)
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))?;
        pool.install(|| work(&seeds))
    };

    // Merge in seed order, then group runs by algorithm in config order.
    let mut initial_params = Vec::with_capacity(outcomes.len());
    let mut by_seed_records: Vec<RunRecord> = Vec::new();
    let mut failures: Vec<FailureRecord> = Vec::new();
    for outcome in outcomes {
        initial_params.push(outcome.initial_params);
        by_seed_records.extend(outcome.records);
        failures.extend(outcome.failures);
    }
    let mut runs: Vec<RunRecord> = Vec::with_capacity(by_seed_records.len());
    for &algorithm in &config.algorithms {
        runs.extend(by_seed_records.iter().filter(|r| r.algorithm == algorithm).cloned());
    }

    let aggregates = build_aggregates(&config.algorithms, &runs, &failures)?;

    Ok(ExperimentSummary {
        seeds,
        initial_params,
        runs,
        failures,
        aggregates,
    })
}

fn build_aggregates(
    algorithms: &[Algorithm],
    runs: &[RunRecord],
    failures: &[FailureRecord],
) -> Result<Vec<AlgorithmAggregates>> {
    let mut aggregates = Vec::with_capacity(algorithms.len());
    for &algorithm in algorithms {
        let reports: Vec<&PruneReport> = runs
            .iter()
            .filter(|r| r.algorithm == algorithm)
            .map(|r| &r.report)
            .collect();
        let n_failed = failures
            .iter()
            .filter(|f| f.algorithm == Some(algorithm) || f.algorithm.is_none())
            .count();
        let metrics = if reports.is_empty() {
            Vec::new()
        } else {
            (0..METRIC_NAMES.len())
                .map(|m| {
                    let values: Vec<f64> = reports.iter().map(|r| metric_value(r, m)).collect();
                    Ok(MetricAggregate {
                        metric: METRIC_NAMES[m],
                        aggregate: aggregate(&values)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };
        aggregates.push(AlgorithmAggregates {
            algorithm,
            n_succeeded: reports.len(),
            n_failed,
            metrics,
        });
    }
    Ok(aggregates)
}

/// Resolves the dataset named in the config and runs the protocol on it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let source = config.dataset.as_ref().ok_or_else(|| {
        Error::InvalidConfig("experiment config names no dataset source".into())
    })?;
    let dataset: Dataset<f64> = source.resolve()?;
    run_experiment_on(&dataset, config)
}

/// The structure picked by [`select_best`].
#[derive(Debug, Clone, PartialEq)]
pub struct BestSelection {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// `max(|err_mean_ID|, |err_mean_val|)` — smaller is better.
    pub score: f64,
    pub nsse_train: f64,
    pub nsse_validation: f64,
    /// May be empty when the summary was rebuilt from a CSV, which does not
    /// record input names; `n_inputs` is always meaningful.
    pub kept_inputs: Vec<String>,
    pub n_inputs: usize,
    pub n_hidden: usize,
    pub n_params: usize,
}

/// Picks the successful run with the smallest worst-split mean error
/// `max(|err_mean_ID|, |err_mean_val|)`; ties break by validation NSSE, then
/// training NSSE, then stored run order (algorithm config order, seed).
pub fn select_best(summary: &ExperimentSummary) -> Result<BestSelection> {
    let mut best: Option<&RunRecord> = None;
    let score = |r: &PruneReport| r.error_mean_train.abs().max(r.error_mean_validation.abs());
    for run in &summary.runs {
        let better = match best {
            None => true,
            Some(b) => {
                let (s, bs) = (score(&run.report), score(&b.report));
                s < bs
                    || (s == bs
                        && (run.report.nsse_validation < b.report.nsse_validation
                            || (run.report.nsse_validation == b.report.nsse_validation
                                && run.report.nsse_train < b.report.nsse_train)))
            }
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.ok_or(Error::NoSuccessfulSeeds)?;
    Ok(BestSelection {
        algorithm: best.algorithm,
        seed: best.seed,
        score: score(&best.report),
        nsse_train: best.report.nsse_train,
        nsse_validation: best.report.nsse_validation,
        kept_inputs: best.report.kept_inputs.clone(),
        n_inputs: best.report.n_inputs,
        n_hidden: best.report.n_hidden,
        n_params: best.report.n_params,
    })
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub runs_csv: PathBuf,
    pub report_txt: PathBuf,
    pub report_md: PathBuf,
    pub traces_jsonl: PathBuf,
    /// Present only when the summary contains failures.
    pub failures_csv: Option<PathBuf>,
}

/// Header of `runs.csv`, one column per field of a run row.
pub const RUNS_CSV_HEADER: &str = "algorithm,seed,Nb_I,Nb_H,Nb_theta,NSSE_ID,NSSE_val,err_mean_ID,err_std_ID,err_mean_val,err_std_val,time_s";

fn runs_csv(summary: &ExperimentSummary) -> String {
    let mut out = String::from(RUNS_CSV_HEADER);
    out.push('\n');
    for run in &summary.runs {
        let r = &run.report;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            run.algorithm,
            run.seed,
            r.n_inputs,
            r.n_hidden,
            r.n_params,
            r.nsse_train,
            r.nsse_validation,
            r.error_mean_train,
            r.error_std_train,
            r.error_mean_validation,
            r.error_std_validation,
            r.wall_time_s,
        );
    }
    out
}

/// Rebuilds a summary from a `runs.csv` produced by [`emit_report`], so the
/// human tables can be regenerated without re-running the experiment.
///
/// The CSV does not record input names, removal traces, initializations, or
/// failed seeds, so those parts of the summary come back empty; every metric,
/// aggregate, and the best-structure selection are fully reconstructed.
pub fn summary_from_runs_csv(text: &str) -> Result<ExperimentSummary> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != RUNS_CSV_HEADER {
        return Err(Error::InvalidConfig(format!(
            "unexpected runs.csv header `{header}` (expected `{RUNS_CSV_HEADER}`)"
        )));
    }
    let columns: Vec<&str> = RUNS_CSV_HEADER.split(',').collect();
    let mut runs: Vec<RunRecord> = Vec::new();
    let mut algorithms: Vec<Algorithm> = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::CsvParse {
                row,
                column: columns[fields.len().min(columns.len()) - 1].into(),
                message: format!("expected {} fields, got {}", columns.len(), fields.len()),
            });
        }
        let parse_f = |col: usize| -> Result<f64> {
            fields[col].parse().map_err(|_| Error::CsvParse {
                row,
                column: columns[col].into(),
                message: format!("`{}` is not a number", fields[col]),
            })
        };
        let parse_n = |col: usize| -> Result<usize> {
            fields[col].parse().map_err(|_| Error::CsvParse {
                row,
                column: columns[col].into(),
                message: format!("`{}` is not a count", fields[col]),
            })
        };
        let algorithm: Algorithm = fields[0].parse()?;
        if !algorithms.contains(&algorithm) {
            algorithms.push(algorithm);
        }
        runs.push(RunRecord {
            algorithm,
            seed: parse_n(1)? as u64,
            report: PruneReport {
                algorithm,
                n_inputs: parse_n(2)?,
                n_hidden: parse_n(3)?,
                n_params: parse_n(4)?,
                nsse_train: parse_f(5)?,
                nsse_validation: parse_f(6)?,
                error_mean_train: parse_f(7)?,
                error_std_train: parse_f(8)?,
                error_mean_validation: parse_f(9)?,
                error_std_validation: parse_f(10)?,
                wall_time_s: parse_f(11)?,
                kept_inputs: Vec::new(),
                removal_trace: Vec::new(),
            },
        });
    }
    if runs.is_empty() {
        return Err(Error::InvalidConfig("runs.csv contains no data rows".into()));
    }
    let mut seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let aggregates = build_aggregates(&algorithms, &runs, &[])?;
    Ok(ExperimentSummary {
        initial_params: vec![None; seeds.len()],
        seeds,
        runs,
        failures: Vec::new(),
        aggregates,
    })
}

/// Fixed-precision cell for the human tables: plain decimal in a readable
/// range, scientific outside it.
fn fmt_cell(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e7).contains(&a) {
        format!("{v:.4}")
    } else {
        format!("{v:.4e}")
    }
}

fn algorithm_heading(agg: &AlgorithmAggregates, total_seeds: usize) -> String {
    format!(
        "{} — {} of {} seeds succeeded",
        agg.algorithm, agg.n_succeeded, total_seeds
    )
}

fn best_section_lines(summary: &ExperimentSummary) -> Vec<String> {
    match select_best(summary) {
        Ok(best) => vec![
            format!("algorithm: {}", best.algorithm),
            format!("seed: {}", best.seed),
            if best.kept_inputs.is_empty() && best.n_inputs > 0 {
                format!("Nb_I: {} (input names not recorded)", best.n_inputs)
            } else {
                format!(
                    "kept inputs ({}): {}",
                    best.kept_inputs.len(),
                    best.kept_inputs.join(", ")
                )
            },
            format!("Nb_H: {}", best.n_hidden),
            format!("Nb_θ: {}", best.n_params),
            format!(
                "score max(|err ID|, |err val|): {}",
                fmt_cell(best.score)
            ),
            format!("NSSE_ID: {}", fmt_cell(best.nsse_train)),
            format!("NSSE_val: {}", fmt_cell(best.nsse_validation)),
        ],
        Err(_) => vec!["no successful seed".into()],
    }
}

/// Renders the plain-text comparison tables — the content [`emit_report`]
/// writes to `report.txt`.
pub fn report_txt(summary: &ExperimentSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "experiment report");
    let _ = writeln!(out, "=================");
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "seeds: {} ({}..={})",
        summary.seeds.len(),
        summary.seeds.first().copied().unwrap_or(0),
        summary.seeds.last().copied().unwrap_or(0)
    );
    let _ = writeln!(out);
    for agg in &summary.aggregates {
        let heading = algorithm_heading(agg, summary.seeds.len());
        let _ = writeln!(out, "{heading}");
        let _ = writeln!(out, "{}", "-".repeat(heading.chars().count()));
        if agg.metrics.is_empty() {
            let _ = writeln!(out, "no successful seeds");
        } else {
            let _ = writeln!(
                out,
                "{:<24} {:>12} {:>12} {:>12} {:>8} {:>8}",
                "metric", "min", "mean", "max", "% < mean", "% > mean"
            );
            for (i, m) in agg.metrics.iter().enumerate() {
                let a = m.aggregate;
                let _ = writeln!(
                    out,
                    "{:<24} {:>12} {:>12} {:>12} {:>8.1} {:>8.1}",
                    METRIC_LABELS[i],
                    fmt_cell(a.min),
                    fmt_cell(a.mean),
                    fmt_cell(a.max),
                    a.pct_below,
                    a.pct_above
                );
            }
        }
        let _ = writeln!(out);
    }
    if !summary.failures.is_empty() {
        let _ = writeln!(out, "failures ({})", summary.failures.len());
        let _ = writeln!(out, "{}", "-".repeat(12));
        for f in &summary.failures {
            let scope = f.algorithm.map_or("all algorithms".to_string(), |a| a.to_string());
            let _ = writeln!(out, "seed {} [{}]: {}", f.seed, scope, f.message);
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out, "selected structure (smallest worst-split mean error)");
    let _ = writeln!(out, "{}", "-".repeat(52));
    for line in best_section_lines(summary) {
        let _ = writeln!(out, "{line}");
    }
    out
}

/// Renders the Markdown comparison tables — the content [`emit_report`]
/// writes to `report.md`.
pub fn report_md(summary: &ExperimentSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# experiment report");
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "seeds: {} ({}..={})",
        summary.seeds.len(),
        summary.seeds.first().copied().unwrap_or(0),
        summary.seeds.last().copied().unwrap_or(0)
    );
    for agg in &summary.aggregates {
        let _ = writeln!(out);
        let _ = writeln!(out, "## {}", algorithm_heading(agg, summary.seeds.len()));
        let _ = writeln!(out);
        if agg.metrics.is_empty() {
            let _ = writeln!(out, "no successful seeds");
            continue;
        }
        let _ = writeln!(out, "| metric | min | mean | max | % < mean | % > mean |");
        let _ = writeln!(out, "|---|---:|---:|---:|---:|---:|");
        for (i, m) in agg.metrics.iter().enumerate() {
            let a = m.aggregate;
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:.1} | {:.1} |",
                METRIC_LABELS[i],
                fmt_cell(a.min),
                fmt_cell(a.mean),
                fmt_cell(a.max),
                a.pct_below,
                a.pct_above
            );
        }
    }
    if !summary.failures.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "## failures ({})", summary.failures.len());
        let _ = writeln!(out);
        for f in &summary.failures {
            let scope = f.algorithm.map_or("all algorithms".to_string(), |a| a.to_string());
            let _ = writeln!(out, "- seed {} [{}]: {}", f.seed, scope, f.message);
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "## selected structure (smallest worst-split mean error)");
    let _ = writeln!(out);
    for line in best_section_lines(summary) {
        let _ = writeln!(out, "- {line}");
    }
    out
}

#[derive(Serialize)]
struct TraceLine<'a> {
    algorithm: &'a str,
    seed: u64,
    #[serde(flatten)]
    event: &'a crate::prune::TraceEvent,
}

fn traces_jsonl(summary: &ExperimentSummary) -> Result<String> {
    let mut out = String::new();
    for run in &summary.runs {
        for event in &run.report.removal_trace {
            let line = serde_json::to_string(&TraceLine {
                algorithm: run.algorithm.name(),
                seed: run.seed,
                event,
            })
            .map_err(|e| Error::InvalidConfig(format!("trace serialization failed: {e}")))?;
            out.push_str(&line);
            out.push('\n');
        }
    }
    Ok(out)
}

fn failures_csv(summary: &ExperimentSummary) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["algorithm", "seed", "message"])
        .map_err(Error::Csv)?;
    for f in &summary.failures {
        let scope = f.algorithm.map_or("all".to_string(), |a| a.to_string());
        writer
            .write_record([scope.as_str(), &f.seed.to_string(), &f.message])
            .map_err(Error::Csv)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidConfig(format!("csv buffer error: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidConfig(format!("csv not UTF-8: {e}")))
}

/// Writes `runs.csv`, `report.txt`, `report.md`, `traces.jsonl` (and
/// `failures.csv` when there are failures) into `dir`. Re-emitting the same
/// summary produces byte-identical files.
pub fn emit_report(summary: &ExperimentSummary, dir: &Path) -> Result<ReportFiles> {
    if summary.aggregates.is_empty() {
        return Err(Error::InvalidConfig(
            "summary covers no algorithms; nothing to report".into(),
        ));
    }
    fs::create_dir_all(dir)?;
    let runs_path = dir.join("runs.csv");
    fs::write(&runs_path, runs_csv(summary))?;
    let txt_path = dir.join("report.txt");
    fs::write(&txt_path, report_txt(summary))?;
    let md_path = dir.join("report.md");
    fs::write(&md_path, report_md(summary))?;
    let traces_path = dir.join("traces.jsonl");
    fs::write(&traces_path, traces_jsonl(summary)?)?;
    let failures_path = if summary.failures.is_empty() {
        None
    } else {
        let p = dir.join("failures.csv");
        fs::write(&p, failures_csv(summary)?)?;
        Some(p)
    };
    Ok(ReportFiles {
        runs_csv: runs_path,
        report_txt: txt_path,
        report_md: md_path,
        traces_jsonl: traces_path,
        failures_csv: failures_path,
    })
}
