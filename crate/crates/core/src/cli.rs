//! Command-line front end.
//!
//! Every command takes a single `--seed`; sub-seeds are derived from it, so
//! identical arguments reproduce identical primary outputs. Each command also
//! writes a `<output>.manifest.json` recording its parameters, the tool
//! version, wall-clock timings and a timestamp.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::cost::{build_cost_report, CostTimes, PriceTable};
use crate::dataset::{generate_synthetic_labeled, load_csv, random_groups, write_csv, Dataset, SynthSpec};
use crate::earlystop::{cross_validate, run_with_early_stop, train_predictor, AlgorithmConfig, RunReport, StopPolicy, TrainedPredictor};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use crate::trace::{Algorithm, Clock};

#[derive(Debug, Parser)]
#[command(name = "tailcut", version, about = "Early-stopped k-means/EM clustering with cost reporting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a dataset from a Gaussian-mixture spec (JSON) and write it as CSV.
    Synth(SynthArgs),
    /// Fit a stop-threshold predictor on randomly sampled training groups.
    Train(TrainArgs),
    /// Cluster a dataset, stopping early at a target accuracy.
    Cluster(ClusterArgs),
    /// k-fold cross-validation of the early-stop rule.
    Validate(ValidateArgs),
    /// Dollar cost report for a run, a validation report or explicit times.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV, one point per row.
    #[arg(long)]
    pub data: PathBuf,
    /// The first CSV row is a header.
    #[arg(long)]
    pub header: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the generating component of each row.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "kmeans")]
    pub algorithm: Algorithm,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub group_size: usize,
    /// Number of training groups (default: every group).
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `wall` for measured time, `iterations` for a reproducible logical clock.
    #[arg(long, default_value = "wall")]
    pub clock: Clock,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub predictor: PathBuf,
    #[arg(long)]
    pub target_accuracy: f64,
    /// Refuse predictors trained for a different algorithm.
    #[arg(long)]
    pub algorithm: Option<Algorithm>,
    #[arg(long, default_value_t = 2)]
    pub min_iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "wall")]
    pub clock: Clock,
    /// One label per input row.
    #[arg(long)]
    pub out_labels: PathBuf,
    #[arg(long)]
    pub out_report: PathBuf,
    /// Trace CSV (default: report path with `.trace.csv`).
    #[arg(long)]
    pub out_trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "kmeans")]
    pub algorithm: Algorithm,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub group_size: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Comma-separated target accuracies.
    #[arg(long, default_value = "0.9,0.95,0.99,0.999")]
    pub targets: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "wall")]
    pub clock: Clock,
    /// Summary JSON; the detail CSV goes next to it as `<stem>.detail.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run report, validation report or `{train_s, actual_s, full_s}` JSON.
    #[arg(long)]
    pub input: PathBuf,
    /// Price table JSON (default: the bundled table).
    #[arg(long)]
    pub prices: Option<PathBuf>,
    #[arg(long)]
    pub instance: String,
    /// Target row to price when the input is a validation report.
    #[arg(long)]
    pub target: Option<f64>,
    #[arg(long)]
    pub train_seconds: Option<f64>,
    /// Full-convergence time, required for run reports.
    #[arg(long)]
    pub full_seconds: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Cluster(a) => cmd_cluster(&a),
        Command::Validate(a) => cmd_validate(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: &'static str,
    tool_version: &'static str,
    parameters: Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
    timing: Value,
    timestamp_unix: u64,
}

fn write_manifest(primary: &Path, manifest: RunManifest) -> Result<()> {
    write_json(&sibling(primary, "manifest.json"), &manifest)
}

fn manifest(command: &'static str, parameters: Value, inputs: &[&Path], outputs: &[&Path], timing: Value) -> RunManifest {
    RunManifest {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        parameters,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        timing,
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    }
}

/// `dir/stem.<suffix>` for `dir/stem.ext`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn with_path(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(with_path(path))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(with_path(path))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
{
    let mut out = create(path)?;
    f(&mut out)?;
    out.flush()?;
    Ok(())
}

fn load(data: &DataArgs) -> Result<Dataset> {
    if !data.data.is_file() {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::NotFound,
            format!("{}: no such file", data.data.display()),
        )));
    }
    load_csv(&data.data, data.header)
}

fn split_seed(seed: u64) -> u64 {
    derive_seed(seed, stream::SPLIT, 0)
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let text = read_text(&a.spec)?;
    let spec: SynthSpec = serde_json::from_str(&text)?;
    let (dataset, labels) = generate_synthetic_labeled(&spec, a.seed)?;
    write_with(&a.out, |w| write_csv(&dataset, w))?;
    let mut outputs = vec![a.out.as_path()];
    if let Some(path) = &a.labels_out {
        write_with(path, |w| {
            for l in &labels {
                writeln!(w, "{l}")?;
            }
            Ok(())
        })?;
        outputs.push(path);
    }
    write_manifest(
        &a.out,
        manifest("synth", json!({ "seed": a.seed, "n_points": spec.n_points, "dim": spec.dim }), &[&a.spec], &outputs, json!({})),
    )
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    if a.k == 0 || a.k > a.group_size {
        return Err(Error::arg(format!(
            "--k {} must be between 1 and --group-size {}",
            a.k, a.group_size
        )));
    }
    let dataset = load(&a.data)?;
    let split = random_groups(&dataset, a.group_size, split_seed(a.seed))?;
    let count = a.groups.unwrap_or(split.len());
    if count == 0 || count > split.len() {
        return Err(Error::arg(format!(
            "--groups {count} must be between 1 and the {} available groups",
            split.len()
        )));
    }
    let training: Vec<usize> = (0..count).collect();
    let started = std::time::Instant::now();
    let predictor = train_predictor(&dataset, &split, &training, a.algorithm, a.k, a.seed, a.clock)?;
    let wall = started.elapsed().as_secs_f64();
    fs::write(&a.out, predictor.to_json()?).map_err(with_path(&a.out))?;
    write_manifest(
        &a.out,
        manifest(
            "train",
            json!({
                "algorithm": a.algorithm, "k": a.k, "group_size": a.group_size,
                "groups": count, "seed": a.seed, "clock": a.clock, "header": a.data.header,
            }),
            &[&a.data.data],
            &[&a.out],
            json!({
                "training_time_seconds": predictor.training_time_seconds,
                "wall_seconds": wall,
                "pairs": predictor.pair_count,
            }),
        ),
    )?;
    println!(
        "predictor: h = {} + {} r + {} r^2 (R^2 {:.4}, {} pairs from {} groups)",
        predictor.model.beta0,
        predictor.model.beta1,
        predictor.model.beta2,
        predictor.model.diagnostics.r_squared,
        predictor.pair_count,
        count
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct ClusterOutput<'a> {
    dataset_id: &'a str,
    predictor_dataset_id: &'a str,
    #[serde(flatten)]
    report: &'a RunReport,
}

fn cmd_cluster(a: &ClusterArgs) -> Result<()> {
    let predictor = TrainedPredictor::from_json(&read_text(&a.predictor)?)?;
    if let Some(alg) = a.algorithm {
        if alg != predictor.algorithm {
            return Err(Error::arg(format!(
                "--algorithm {alg} does not match the predictor's algorithm {}",
                predictor.algorithm
            )));
        }
    }
    let policy = StopPolicy::new(&predictor.model, a.target_accuracy, a.min_iterations)?;
    let dataset = load(&a.data)?;
    let config = AlgorithmConfig::new(predictor.algorithm, predictor.k, a.seed);
    config.validate(dataset.len())?;
    let (report, trace) = run_with_early_stop(&dataset, &config, &policy, a.clock)?;

    write_with(&a.out_labels, |w| {
        for l in report.final_labels.labels() {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })?;
    write_json(
        &a.out_report,
        &ClusterOutput {
            dataset_id: dataset.id(),
            predictor_dataset_id: &predictor.dataset_id,
            report: &report,
        },
    )?;
    let trace_path = a.out_trace.clone().unwrap_or_else(|| sibling(&a.out_report, "trace.csv"));
    write_with(&trace_path, |w| trace.write_csv(w))?;
    write_manifest(
        &a.out_report,
        manifest(
            "cluster",
            json!({
                "target_accuracy": a.target_accuracy, "threshold": policy.threshold,
                "min_iterations": a.min_iterations, "seed": a.seed, "clock": a.clock,
                "algorithm": predictor.algorithm, "k": predictor.k,
            }),
            &[&a.data.data, &a.predictor],
            &[&a.out_labels, &a.out_report, &trace_path],
            json!({ "elapsed_seconds": report.elapsed_seconds }),
        ),
    )?;
    println!(
        "{} iterations, {} (threshold {:e})",
        report.stopped_iteration,
        if report.converged_early { "stopped early" } else { "ran to completion" },
        policy.threshold
    );
    Ok(())
}

pub fn parse_targets(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::arg(format!("target '{s}' is not a number")))
        })
        .collect()
}

fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    let targets = parse_targets(&a.targets)?;
    if a.k == 0 || a.k > a.group_size {
        return Err(Error::arg(format!(
            "--k {} must be between 1 and --group-size {}",
            a.k, a.group_size
        )));
    }
    let dataset = load(&a.data)?;
    let split = random_groups(&dataset, a.group_size, split_seed(a.seed))?;
    let started = std::time::Instant::now();
    let cv = cross_validate(&dataset, &split, a.folds, a.algorithm, a.k, &targets, a.seed, a.clock)?;
    let wall = started.elapsed().as_secs_f64();
    let detail_path = sibling(&a.out, "detail.csv");
    write_with(&a.out, |w| cv.write_summary_json(w))?;
    write_with(&detail_path, |w| cv.write_detail_csv(w))?;
    write_manifest(
        &a.out,
        manifest(
            "validate",
            json!({
                "algorithm": a.algorithm, "k": a.k, "group_size": a.group_size, "folds": a.folds,
                "targets": targets, "seed": a.seed, "clock": a.clock, "header": a.data.header,
            }),
            &[&a.data.data],
            &[&a.out, &detail_path],
            json!({ "wall_seconds": wall }),
        ),
    )?;
    println!("target   mean_acc  std_acc   iter_frac time_frac");
    for s in &cv.pooled.summary {
        println!(
            "{:<8} {:<9.5} {:<9.5} {:<9.4} {:.4}",
            s.target, s.mean_accuracy, s.std_accuracy, s.mean_iter_fraction, s.mean_time_fraction
        );
    }
    Ok(())
}

fn number(v: &Value, key: &str) -> Result<f64> {
    v.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Data(format!("input is missing numeric field '{key}'")))
}

/// Extracts `(train, actual, full)` seconds from a supported report file.
fn times_from_input(v: &Value, a: &ReportArgs) -> Result<CostTimes> {
    let summary_source = v.get("pooled").or_else(|| v.get("summary").map(|_| v));
    if let Some(report) = summary_source {
        let rows = report
            .get("summary")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Data("validation report has no summary".into()))?;
        let row = match a.target {
            Some(t) => rows
                .iter()
                .find(|r| r.get("target").and_then(Value::as_f64) == Some(t))
                .ok_or_else(|| Error::arg(format!("no summary row for target {t}")))?,
            None if rows.len() == 1 => &rows[0],
            None => return Err(Error::arg("--target is required for reports with several targets")),
        };
        return Ok(CostTimes {
            train_s: a.train_seconds.unwrap_or(number(report, "training_time_seconds")?),
            actual_s: number(row, "total_time_actual_s")?,
            full_s: number(row, "total_time_full_s")?,
        });
    }
    if v.get("stopped_iteration").is_some() {
        let full_s = a
            .full_seconds
            .ok_or_else(|| Error::arg("--full-seconds is required for run reports"))?;
        return Ok(CostTimes {
            train_s: a.train_seconds.unwrap_or(0.0),
            actual_s: number(v, "elapsed_seconds")?,
            full_s,
        });
    }
    Ok(CostTimes {
        train_s: a.train_seconds.unwrap_or(number(v, "train_s")?),
        actual_s: number(v, "actual_s")?,
        full_s: a.full_seconds.unwrap_or(number(v, "full_s")?),
    })
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let table = match &a.prices {
        Some(p) => PriceTable::from_json(&read_text(p)?)?,
        None => PriceTable::bundled(),
    };
    let input: Value = serde_json::from_str(&read_text(&a.input)?)?;
    let times = times_from_input(&input, a)?;
    let report = build_cost_report(times, &table, &a.instance)?;
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    lock.write_all(report.render().as_bytes())?;
    Ok(())
}
