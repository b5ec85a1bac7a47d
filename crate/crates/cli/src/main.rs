//! `trimnet` — command-line driver for the structure-selection toolkit.
//!
//! Five subcommands cover the workflow end to end: `generate` synthesizes a
//! sawmill-like dataset with a planted two-unit target, `train` fits a
//! one-hidden-layer perceptron with the robust Levenberg–Marquardt solver,
//! `prune` shrinks a trained model with one of the four pruning algorithms,
//! `experiment` runs the multi-seed comparison of all of them, and `report`
//! rebuilds the human-readable tables from an existing `runs.csv`.
//!
//! One TOML configuration format serves every subcommand (each reads only the
//! sections it needs); flags override config-file values, which override the
//! built-in defaults. Every successful run writes a `manifest.toml` beside its
//! outputs holding the tool version, the seeds used, and the fully resolved
//! configuration, so a run is reproducible from its manifest alone.
//!
//! Exit codes: 0 on success (including `--help`), 1 on usage errors, 2 on
//! runtime failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use trimnet::datagen::{generate as generate_dataset, GeneratorConfig, TARGET_NAME};
use trimnet::harness::{
    emit_report, report_md, report_txt, run_experiment, summary_from_runs_csv, DatasetSource,
    ExperimentConfig, RUNS_CSV_HEADER,
};
use trimnet::prune::{run_algorithm, Algorithm, PruneReport, TraceEvent};
use trimnet::train::{input_ranges, levenberg_marquardt, nguyen_widrow_init};
use trimnet::{Dataset, Model};

#[derive(Parser)]
#[command(
    name = "trimnet",
    version,
    about = "Structure selection for one-hidden-layer perceptrons",
    long_about = "Trains one-hidden-layer perceptrons with a robust \
                  Levenberg–Marquardt solver and shrinks them with four pruning \
                  algorithms (engel, engel_mod, n2pfa, combined), including a \
                  multi-seed comparison harness and a synthetic dataset generator."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory, created if absent.
    #[arg(long, global = true, env = "TRIMNET_OUT", default_value = "trimnet-out")]
    out: PathBuf,

    /// TOML configuration file; flags override its values. A manifest.toml
    /// from an earlier run also works (its [config] snapshot is used).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed override: the generator seed for `generate`, the initialization
    /// seed for `train` and `prune`, and the base seed for `experiment`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Print progress details to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a sawmill-like dataset with a planted two-unit target.
    Generate(GenerateArgs),
    /// Train a fresh network on a dataset.
    Train(TrainArgs),
    /// Shrink a trained model with one pruning algorithm.
    Prune(PruneArgs),
    /// Run the multi-seed comparison of the pruning algorithms.
    Experiment(ExperimentArgs),
    /// Rebuild the report tables from an existing runs.csv.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of rows (overrides the config file).
    #[arg(long)]
    rows: Option<usize>,
}

/// Dataset selection shared by the data-consuming subcommands.
#[derive(Args)]
struct DataArgs {
    /// Dataset CSV; overrides any [dataset] section of the config file.
    #[arg(long)]
    data: Option<PathBuf>,

    /// Target column of --data [default: delta_t].
    #[arg(long, requires = "data")]
    target: Option<String>,

    /// Split seed used when --data has no `split` column [default: 0].
    #[arg(long, requires = "data")]
    split_seed: Option<u64>,
}

impl DataArgs {
    /// Installs `--data` (with its target and split seed) as the config's
    /// dataset source; without the flag the config file's source stands.
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(path) = &self.data {
            config.dataset = Some(DatasetSource::Csv {
                path: path.clone(),
                target: self.target.clone().unwrap_or_else(|| TARGET_NAME.to_string()),
                split_seed: self.split_seed.unwrap_or(0),
            });
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Hidden-layer width of the fresh network (overrides the config file).
    #[arg(long)]
    hidden: Option<usize>,

    /// Cap on accepted solver steps (overrides the config file).
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args)]
struct PruneArgs {
    /// Trained model file, as written by `trimnet train`.
    #[arg(long)]
    model: PathBuf,

    #[command(flatten)]
    data: DataArgs,

    /// Pruning algorithm: engel, engel_mod, n2pfa, or combined. Defaults to
    /// the config file's `algorithms` entry when it names exactly one.
    #[arg(long)]
    algorithm: Option<Algorithm>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Number of seeds (overrides the config file).
    #[arg(long)]
    seeds: Option<usize>,

    /// Worker threads for the seed loop; 0 uses the global pool default
    /// (overrides the config file).
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// runs.csv produced by `trimnet experiment`.
    #[arg(long)]
    runs: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let mut config = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Generate(args) => cmd_generate(cli, config, args),
        Command::Train(args) => cmd_train(cli, config, args),
        Command::Prune(args) => cmd_prune(cli, config, args),
        Command::Experiment(args) => {
            args.data.apply(&mut config);
            if let Some(seed) = cli.seed {
                config.base_seed = seed;
            }
            if let Some(n) = args.seeds {
                config.n_seeds = n;
            }
            if let Some(p) = args.parallelism {
                config.parallelism = p;
            }
            cmd_experiment(cli, config)
        }
        Command::Report(args) => cmd_report(cli, args),
    }
}

/// Parses the config file, or yields the defaults when none is given. A
/// `manifest.toml` from an earlier run is also accepted: its `[config]`
/// snapshot is read, so a run replays directly from its manifest.
fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let parse = || -> Result<ExperimentConfig> {
        let value: toml::Value = toml::from_str(&text)?;
        if value.get("provenance").is_some() {
            let snapshot = value
                .get("config")
                .ok_or_else(|| anyhow!("this manifest records no [config] snapshot"))?;
            return Ok(snapshot.clone().try_into()?);
        }
        Ok(value.try_into()?)
    };
    parse().with_context(|| format!("cannot parse config file {}", path.display()))
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Serialize)]
struct Provenance {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
}

/// What `manifest.toml` records: enough to replay the run without the original
/// command line. The `[config]` section can be extracted and passed back via
/// `--config`; `model` / `runs` hold the input paths `prune` / `report` need
/// on top of that.
#[derive(Serialize)]
struct Manifest<'a> {
    seeds: &'a [u64],
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a Path>,
    #[serde(skip_serializing_if = "Option::is_none")]
    runs: Option<&'a Path>,
    provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a ExperimentConfig>,
}

impl<'a> Manifest<'a> {
    fn new(subcommand: &'static str, seeds: &'a [u64], config: &'a ExperimentConfig) -> Self {
        Manifest {
            seeds,
            model: None,
            runs: None,
            provenance: Provenance {
                tool: "trimnet",
                version: env!("CARGO_PKG_VERSION"),
                subcommand,
            },
            config: Some(config),
        }
    }

    fn write(&self, out_dir: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).context("cannot serialize manifest")?;
        write_file(&out_dir.join("manifest.toml"), &text)
    }
}

// ---------------------------------------------------------------------------
// Subcommands

fn cmd_generate(cli: &Cli, mut config: ExperimentConfig, args: &GenerateArgs) -> Result<()> {
    let mut generator = match config.dataset.take() {
        None => GeneratorConfig::default(),
        Some(DatasetSource::Generator(g)) => g,
        Some(DatasetSource::Csv { .. }) => bail!(
            "`generate` needs a [dataset.generator] config section, \
             but the config file names a CSV source"
        ),
    };
    if let Some(rows) = args.rows {
        generator.n_rows = rows;
    }
    if let Some(seed) = cli.seed {
        generator.seed = seed;
    }

    let dataset: Dataset = generate_dataset(&generator)?;
    if cli.verbose {
        eprintln!(
            "generated {} rows × {} inputs (target `{}`, seed {})",
            dataset.n_rows(),
            dataset.n_inputs(),
            dataset.target_name(),
            generator.seed
        );
    }

    fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    let csv_path = cli.out.join("dataset.csv");
    let comments = vec![format!(
        "synthesized by trimnet {} (seed {}, {} rows)",
        env!("CARGO_PKG_VERSION"),
        generator.seed,
        generator.n_rows
    )];
    dataset.save_csv(&csv_path, &comments)?;
    println!("wrote {}", csv_path.display());

    let seeds = [generator.seed];
    config.dataset = Some(DatasetSource::Generator(generator));
    Manifest::new("generate", &seeds, &config).write(&cli.out)?;
    println!("wrote {}", cli.out.join("manifest.toml").display());
    Ok(())
}

fn cmd_train(cli: &Cli, mut config: ExperimentConfig, args: &TrainArgs) -> Result<()> {
    args.data.apply(&mut config);
    if let Some(seed) = cli.seed {
        config.base_seed = seed;
    }
    if let Some(hidden) = args.hidden {
        config.initial_hidden = hidden;
    }
    if let Some(max_iterations) = args.max_iterations {
        config.train.max_iterations = max_iterations;
    }

    let dataset = resolve_dataset(&config)?;
    let ranges = input_ranges(&dataset)?;
    let init = nguyen_widrow_init(
        dataset.n_inputs(),
        config.initial_hidden,
        &ranges,
        config.base_seed,
    )?;
    if cli.verbose {
        eprintln!(
            "training {} inputs × {} hidden ({} parameters) on {} rows, seed {}",
            dataset.n_inputs(),
            config.initial_hidden,
            init.count_params(),
            dataset.n_rows(),
            config.base_seed
        );
    }
    let (model, report) = levenberg_marquardt(&init, &dataset, &config.train)?;
    if cli.verbose {
        eprintln!(
            "stopped after {} iterations ({:?}): train NSSE {:e}, validation NSSE {:?}",
            report.iterations_used, report.stop_reason, report.nsse_train, report.nsse_validation
        );
    }

    fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    let model_path = cli.out.join("model.txt");
    model.save(&model_path)?;
    println!("wrote {}", model_path.display());

    let report_path = cli.out.join("train_report.json");
    let json = serde_json::to_string_pretty(&report).context("cannot serialize train report")?;
    write_file(&report_path, &format!("{json}\n"))?;
    println!("wrote {}", report_path.display());

    let seeds = [config.base_seed];
    Manifest::new("train", &seeds, &config).write(&cli.out)?;
    println!("wrote {}", cli.out.join("manifest.toml").display());
    Ok(())
}

fn cmd_prune(cli: &Cli, mut config: ExperimentConfig, args: &PruneArgs) -> Result<()> {
    args.data.apply(&mut config);
    if let Some(seed) = cli.seed {
        config.base_seed = seed;
    }
    let algorithm = match args.algorithm {
        Some(a) => a,
        None if config.algorithms.len() == 1 => config.algorithms[0],
        None => bail!(
            "pass --algorithm (engel, engel_mod, n2pfa, or combined); \
             the config file does not name exactly one"
        ),
    };
    config.algorithms = vec![algorithm];

    let dataset = resolve_dataset(&config)?;
    let model = Model::load(&args.model)
        .with_context(|| format!("cannot load model {}", args.model.display()))?;
    if cli.verbose {
        eprintln!(
            "pruning {} parameters with {algorithm} ({} inputs × {} hidden)",
            model.count_params(),
            model.n_active_inputs(),
            model.n_active_hidden()
        );
    }
    let (pruned, report) = run_algorithm(algorithm, &model, &dataset, &config.train, &config.prune)?;
    if cli.verbose {
        eprintln!(
            "kept {} parameters ({} inputs × {} hidden) after {} removals",
            report.n_params,
            report.n_inputs,
            report.n_hidden,
            report.removal_trace.len()
        );
    }

    fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    let model_path = cli.out.join("model.txt");
    pruned.save(&model_path)?;
    println!("wrote {}", model_path.display());

    let report_path = cli.out.join("report.csv");
    write_file(&report_path, &prune_report_csv(&report, config.base_seed))?;
    println!("wrote {}", report_path.display());

    let trace_path = cli.out.join("trace.jsonl");
    write_file(
        &trace_path,
        &trace_jsonl(algorithm, config.base_seed, &report.removal_trace)?,
    )?;
    println!("wrote {}", trace_path.display());

    let seeds = [config.base_seed];
    let mut manifest = Manifest::new("prune", &seeds, &config);
    manifest.model = Some(&args.model);
    manifest.write(&cli.out)?;
    println!("wrote {}", cli.out.join("manifest.toml").display());
    Ok(())
}

fn cmd_experiment(cli: &Cli, config: ExperimentConfig) -> Result<()> {
    if config.dataset.is_none() {
        bail!("no dataset: pass --data FILE or configure a [dataset] section in the config file");
    }
    if cli.verbose {
        eprintln!(
            "running {} seeds × {} algorithms, initial width {}",
            config.n_seeds,
            config.algorithms.len(),
            config.initial_hidden
        );
    }
    let summary = run_experiment(&config)?;
    if cli.verbose {
        for agg in &summary.aggregates {
            eprintln!(
                "{}: {} succeeded, {} failed",
                agg.algorithm, agg.n_succeeded, agg.n_failed
            );
        }
    }

    let files = emit_report(&summary, &cli.out)?;
    println!("wrote {}", files.runs_csv.display());
    println!("wrote {}", files.report_txt.display());
    println!("wrote {}", files.report_md.display());
    println!("wrote {}", files.traces_jsonl.display());
    if let Some(failures) = &files.failures_csv {
        println!("wrote {}", failures.display());
    }

    Manifest::new("experiment", &summary.seeds, &config).write(&cli.out)?;
    println!("wrote {}", cli.out.join("manifest.toml").display());
    Ok(())
}

fn cmd_report(cli: &Cli, args: &ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&args.runs)
        .with_context(|| format!("cannot read {}", args.runs.display()))?;
    let summary = summary_from_runs_csv(&text)?;
    if cli.verbose {
        eprintln!(
            "rebuilt {} runs over {} seeds from {}",
            summary.runs.len(),
            summary.seeds.len(),
            args.runs.display()
        );
    }

    fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    let txt_path = cli.out.join("report.txt");
    write_file(&txt_path, &report_txt(&summary))?;
    println!("wrote {}", txt_path.display());
    let md_path = cli.out.join("report.md");
    write_file(&md_path, &report_md(&summary))?;
    println!("wrote {}", md_path.display());

    let manifest = Manifest {
        seeds: &summary.seeds,
        model: None,
        runs: Some(&args.runs),
        provenance: Provenance {
            tool: "trimnet",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: "report",
        },
        config: None,
    };
    manifest.write(&cli.out)?;
    println!("wrote {}", cli.out.join("manifest.toml").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// Helpers

fn resolve_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let source = config.dataset.as_ref().ok_or_else(|| {
        anyhow!("no dataset: pass --data FILE or configure a [dataset] section in the config file")
    })?;
    source.resolve().with_context(|| match source {
        DatasetSource::Csv { path, .. } => format!("cannot load dataset {}", path.display()),
        DatasetSource::Generator(g) => format!("cannot generate dataset (seed {})", g.seed),
    })
}

/// One run row in the `runs.csv` schema (the seed column is a label; pruning
/// itself draws no randomness).
fn prune_report_csv(report: &PruneReport, seed: u64) -> String {
    format!(
        "{RUNS_CSV_HEADER}\n{},{},{},{},{},{},{},{},{},{},{},{}\n",
        report.algorithm,
        seed,
        report.n_inputs,
        report.n_hidden,
        report.n_params,
        report.nsse_train,
        report.nsse_validation,
        report.error_mean_train,
        report.error_std_train,
        report.error_mean_validation,
        report.error_std_validation,
        report.wall_time_s,
    )
}

/// JSON-lines trace in the same shape `trimnet experiment` writes.
fn trace_jsonl(algorithm: Algorithm, seed: u64, trace: &[TraceEvent]) -> Result<String> {
    #[derive(Serialize)]
    struct TraceLine<'a> {
        algorithm: &'a str,
        seed: u64,
        #[serde(flatten)]
        event: &'a TraceEvent,
    }
    let mut out = String::new();
    for event in trace {
        let line = serde_json::to_string(&TraceLine {
            algorithm: algorithm.name(),
            seed,
            event,
        })
        .context("cannot serialize trace event")?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
