//! Training a stop-threshold predictor, early-stopped runs and validation.
//!
//! Validation runs every group to full convergence once and locates the stop
//! point for each target offline from the recorded trace, which gives the
//! achieved accuracy against the known final partition. Live early-stopped
//! runs ([`run_with_early_stop`]) stop at exactly the same iteration because
//! both use the same seeded run and the same first-crossing rule.

use std::io::Write;
use std::ops::ControlFlow;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accuracy::{pair_counts, Partition};
use crate::dataset::{kfold_split, Dataset, FoldAssignment, GroupSplit};
use crate::em::{run_em, EMConfig};
use crate::error::{Error, Result};
use crate::kmeans::{run_kmeans, KMeansConfig};
use crate::regression::{collect_pairs, fit_quadratic, threshold_for_accuracy, QuadraticModel, TrainingPairs};
use crate::rng::{derive_seed, stream};
use crate::trace::{keep_going, Algorithm, Clock, IterationRecord, IterationTrace, Outcome};

/// `h_1` is undefined, so the earliest possible stop is iteration 2.
pub const DEFAULT_MIN_ITERATIONS: usize = 2;

/// Algorithm plus its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum AlgorithmConfig {
    KMeans(KMeansConfig),
    Em(EMConfig),
}

impl AlgorithmConfig {
    pub fn new(algorithm: Algorithm, k: usize, seed: u64) -> Self {
        match algorithm {
            Algorithm::KMeans => AlgorithmConfig::KMeans(KMeansConfig::new(k, seed)),
            Algorithm::Em => AlgorithmConfig::Em(EMConfig::new(k, seed)),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            AlgorithmConfig::KMeans(_) => Algorithm::KMeans,
            AlgorithmConfig::Em(_) => Algorithm::Em,
        }
    }

    pub fn k(&self) -> usize {
        match self {
            AlgorithmConfig::KMeans(c) => c.k,
            AlgorithmConfig::Em(c) => c.k,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        match &mut c {
            AlgorithmConfig::KMeans(k) => k.seed = seed,
            AlgorithmConfig::Em(e) => e.seed = seed,
        }
        c
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            AlgorithmConfig::KMeans(c) => c.validate(n),
            AlgorithmConfig::Em(c) => c.validate(n),
        }
    }

    /// Runs the algorithm and returns its trace.
    pub fn run(
        &self,
        dataset: &Dataset,
        clock: Clock,
        observer: &mut dyn FnMut(&IterationRecord) -> ControlFlow<()>,
    ) -> Result<IterationTrace> {
        match self {
            AlgorithmConfig::KMeans(c) => run_kmeans(dataset, c, clock, observer).map(|r| r.trace),
            AlgorithmConfig::Em(c) => run_em(dataset, c, clock, observer).map(|r| r.trace),
        }
    }
}

/// Seed used for group `group` under a command seed.
pub fn group_seed(seed: u64, group: usize) -> u64 {
    derive_seed(seed, stream::GROUP_RUN, group as u64)
}

/// Fitted model plus the metadata binding it to an algorithm and `k`.
///
/// Serializes as `{beta0, beta1, beta2, diagnostics, algorithm, dataset_id, k,
/// created_from}`; the training time is kept out of the file so that equal
/// seeds give byte-identical predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPredictor {
    #[serde(flatten)]
    pub model: QuadraticModel,
    pub algorithm: Algorithm,
    pub dataset_id: String,
    pub k: usize,
    pub created_from: Vec<usize>,
    #[serde(skip)]
    pub training_time_seconds: f64,
    #[serde(skip)]
    pub pair_count: usize,
}

impl TrainedPredictor {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: TrainedPredictor = serde_json::from_str(text)?;
        let [b0, b1, b2] = p.model.coefficients();
        if !(b0.is_finite() && b1.is_finite() && b2.is_finite()) {
            return Err(Error::Data("predictor coefficients must be finite".into()));
        }
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn threshold(&self, target: f64) -> f64 {
        threshold_for_accuracy(&self.model, target)
    }
}

/// Target accuracy and the change-rate threshold derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopPolicy {
    /// Absent for policies built from an explicit threshold.
    pub target_accuracy: Option<f64>,
    pub threshold: f64,
    pub min_iterations: usize,
}

impl StopPolicy {
    pub fn new(model: &QuadraticModel, target_accuracy: f64, min_iterations: usize) -> Result<Self> {
        check_target(target_accuracy)?;
        if min_iterations < 2 {
            return Err(Error::arg("min_iterations must be at least 2"));
        }
        Ok(Self {
            target_accuracy: Some(target_accuracy),
            threshold: threshold_for_accuracy(model, target_accuracy),
            min_iterations,
        })
    }

    /// A policy with an explicit threshold.
    pub fn with_threshold(threshold: f64, min_iterations: usize) -> Result<Self> {
        if !(threshold >= 0.0 && threshold.is_finite()) {
            return Err(Error::arg("threshold must be finite and non-negative"));
        }
        Ok(Self {
            target_accuracy: None,
            threshold,
            min_iterations: min_iterations.max(2),
        })
    }

    fn first_iteration(&self) -> usize {
        self.min_iterations.max(2)
    }

    /// Stop iteration for a complete trace: the first qualifying iteration, or
    /// the last one when the threshold is 0 or never reached.
    pub fn offline_stop(&self, trace: &IterationTrace) -> usize {
        if self.threshold > 0.0 {
            if let Some(i) = trace.first_below(self.threshold, self.first_iteration()) {
                return i;
            }
        }
        trace.len()
    }

    fn triggers(&self, record: &IterationRecord) -> bool {
        self.threshold > 0.0
            && record.iteration >= self.first_iteration()
            && record.change_rate.is_some_and(|h| h <= self.threshold)
    }
}

fn check_target(target: f64) -> Result<()> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::arg(format!(
            "target accuracy must be in (0, 1], got {target}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSummaryRow {
    pub iteration: usize,
    pub objective: f64,
    pub change_rate: Option<f64>,
}

/// Outcome of a live early-stopped run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub k: usize,
    pub policy: StopPolicy,
    pub stopped_iteration: usize,
    pub converged_early: bool,
    pub outcome: Outcome,
    pub elapsed_seconds: f64,
    pub trace_summary: Vec<TraceSummaryRow>,
    pub final_labels: Partition,
}

/// Runs with `policy`, returning the report and the (possibly truncated) trace.
pub fn run_with_early_stop(
    dataset: &Dataset,
    config: &AlgorithmConfig,
    policy: &StopPolicy,
    clock: Clock,
) -> Result<(RunReport, IterationTrace)> {
    let mut observer = |r: &IterationRecord| {
        if policy.triggers(r) {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    };
    let trace = config.run(dataset, clock, &mut observer)?;
    let report = RunReport {
        algorithm: config.algorithm(),
        k: config.k(),
        policy: *policy,
        stopped_iteration: trace.len(),
        converged_early: trace.outcome == Outcome::StoppedEarly,
        outcome: trace.outcome,
        elapsed_seconds: trace.elapsed_seconds(),
        trace_summary: trace
            .records
            .iter()
            .map(|r| TraceSummaryRow {
                iteration: r.iteration,
                objective: r.objective,
                change_rate: r.change_rate,
            })
            .collect(),
        final_labels: Partition::new(trace.final_labels().to_vec()),
    };
    Ok((report, trace))
}

/// Full-convergence run of one group.
#[derive(Debug, Clone)]
pub struct GroupRun {
    pub group: usize,
    pub trace: IterationTrace,
}

fn check_groups(split: &GroupSplit, groups: &[usize], k: usize) -> Result<()> {
    if let Some(&g) = groups.iter().find(|&&g| g >= split.len()) {
        return Err(Error::arg(format!(
            "group {g} does not exist ({} groups)",
            split.len()
        )));
    }
    if k > split.group_size {
        return Err(Error::arg(format!(
            "k = {k} exceeds group size {}",
            split.group_size
        )));
    }
    Ok(())
}

/// Runs the listed groups to completion in parallel; output is ordered as `groups`.
pub fn run_groups(
    dataset: &Dataset,
    split: &GroupSplit,
    groups: &[usize],
    algorithm: Algorithm,
    k: usize,
    seed: u64,
    clock: Clock,
) -> Result<Vec<GroupRun>> {
    check_groups(split, groups, k)?;
    groups
        .par_iter()
        .map(|&g| {
            let data = split.group_dataset(dataset, g)?;
            let config = AlgorithmConfig::new(algorithm, k, group_seed(seed, g));
            let trace = config.run(&data, clock, &mut keep_going)?;
            Ok(GroupRun { group: g, trace })
        })
        .collect()
}

/// Pools pairs from converged group runs and fits the quadratic.
pub fn train_from_runs(runs: &[GroupRun], algorithm: Algorithm, k: usize, dataset_id: &str) -> Result<TrainedPredictor> {
    if runs.is_empty() {
        return Err(Error::arg("at least one training group is required"));
    }
    let mut pairs = TrainingPairs::default();
    let mut failed = Vec::new();
    for run in runs {
        let reference = Partition::new(run.trace.final_labels().to_vec());
        match collect_pairs(&run.trace, &reference, run.group) {
            Ok(p) => pairs.extend(p),
            Err(_) => failed.push(run.group),
        }
    }
    if !failed.is_empty() {
        return Err(Error::Training {
            groups: failed,
            reason: "run did not converge within max_iterations".into(),
        });
    }
    let model = fit_quadratic(&pairs).map_err(|e| Error::Training {
        groups: runs.iter().map(|r| r.group).collect(),
        reason: e.to_string(),
    })?;
    Ok(TrainedPredictor {
        model,
        algorithm,
        dataset_id: dataset_id.to_string(),
        k,
        created_from: runs.iter().map(|r| r.group).collect(),
        training_time_seconds: runs.iter().map(|r| r.trace.elapsed_seconds()).sum(),
        pair_count: pairs.len(),
    })
}

/// Runs every training group to convergence and fits the predictor.
///
/// `training_time_seconds` is the summed run time of the training groups.
pub fn train_predictor(
    dataset: &Dataset,
    split: &GroupSplit,
    training_groups: &[usize],
    algorithm: Algorithm,
    k: usize,
    seed: u64,
    clock: Clock,
) -> Result<TrainedPredictor> {
    if training_groups.is_empty() {
        return Err(Error::arg("at least one training group is required"));
    }
    let runs = run_groups(dataset, split, training_groups, algorithm, k, seed, clock)?;
    train_from_runs(&runs, algorithm, k, dataset.id())
}

/// Per-group, per-target validation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationDetail {
    pub group_id: usize,
    pub target: f64,
    pub threshold: f64,
    pub stop_iteration: usize,
    pub full_iterations: usize,
    pub achieved_accuracy: f64,
    pub iter_fraction: f64,
    pub time_fraction: f64,
    pub time_actual_s: f64,
    pub time_full_s: f64,
}

/// Aggregates for one target accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub target: f64,
    pub threshold: f64,
    pub groups: usize,
    pub mean_accuracy: f64,
    /// Population standard deviation over groups.
    pub std_accuracy: f64,
    pub mean_iter_fraction: f64,
    pub mean_time_fraction: f64,
    pub total_time_actual_s: f64,
    pub total_time_full_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub algorithm: Algorithm,
    pub k: usize,
    pub dataset_id: String,
    pub predictor_dataset_id: String,
    pub training_time_seconds: f64,
    pub summary: Vec<TargetSummary>,
    #[serde(skip)]
    pub detail: Vec<ValidationDetail>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `detail` holds one row per target for each run, targets in order.
fn summarize(targets: &[f64], thresholds: &[f64], detail: &[ValidationDetail]) -> Vec<TargetSummary> {
    targets
        .iter()
        .zip(thresholds)
        .enumerate()
        .map(|(t, (&target, &threshold))| {
            let rows: Vec<&ValidationDetail> = detail
                .iter()
                .skip(t)
                .step_by(targets.len())
                .collect();
            let acc: Vec<f64> = rows.iter().map(|r| r.achieved_accuracy).collect();
            let (mean_accuracy, std_accuracy) = mean_std(&acc);
            let iters: Vec<f64> = rows.iter().map(|r| r.iter_fraction).collect();
            let times: Vec<f64> = rows.iter().map(|r| r.time_fraction).collect();
            TargetSummary {
                target,
                threshold,
                groups: rows.len(),
                mean_accuracy,
                std_accuracy,
                mean_iter_fraction: mean_std(&iters).0,
                mean_time_fraction: mean_std(&times).0,
                total_time_actual_s: rows.iter().map(|r| r.time_actual_s).sum(),
                total_time_full_s: rows.iter().map(|r| r.time_full_s).sum(),
            }
        })
        .collect()
}

/// Offline evaluation of one full trace against each target.
pub fn evaluate_trace(run: &GroupRun, predictor: &TrainedPredictor, targets: &[f64]) -> Result<Vec<ValidationDetail>> {
    let trace = &run.trace;
    let full = trace.len();
    let reference = trace.final_labels();
    let time_full = trace.elapsed_seconds();
    targets
        .iter()
        .map(|&target| {
            let policy = StopPolicy::new(&predictor.model, target, DEFAULT_MIN_ITERATIONS)?;
            let stop = policy.offline_stop(trace);
            let rec = trace.record(stop);
            let achieved = pair_counts(&rec.labels, reference)?.rand_index();
            let time_actual = rec.elapsed_seconds;
            let time_fraction = if time_full > 0.0 {
                time_actual / time_full
            } else {
                stop as f64 / full as f64
            };
            Ok(ValidationDetail {
                group_id: run.group,
                target,
                threshold: policy.threshold,
                stop_iteration: stop,
                full_iterations: full,
                achieved_accuracy: achieved,
                iter_fraction: stop as f64 / full as f64,
                time_fraction,
                time_actual_s: time_actual,
                time_full_s: time_full,
            })
        })
        .collect()
}

fn check_targets(targets: &[f64]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::arg("at least one target accuracy is required"));
    }
    targets.iter().try_for_each(|&t| check_target(t))
}

/// Validates `predictor` on already-computed full runs.
pub fn validate_runs(
    predictor: &TrainedPredictor,
    dataset_id: &str,
    runs: &[GroupRun],
    targets: &[f64],
) -> Result<ValidationReport> {
    check_targets(targets)?;
    if runs.is_empty() {
        return Err(Error::arg("validation set is empty"));
    }
    let mut detail = Vec::with_capacity(runs.len() * targets.len());
    for run in runs {
        detail.extend(evaluate_trace(run, predictor, targets)?);
    }
    let thresholds: Vec<f64> = targets.iter().map(|&t| predictor.threshold(t)).collect();
    Ok(ValidationReport {
        algorithm: predictor.algorithm,
        k: predictor.k,
        dataset_id: dataset_id.to_string(),
        predictor_dataset_id: predictor.dataset_id.clone(),
        training_time_seconds: predictor.training_time_seconds,
        summary: summarize(targets, &thresholds, &detail),
        detail,
    })
}

/// Runs each validation group to convergence once and scores every target offline.
#[allow(clippy::too_many_arguments)]
pub fn validate(
    predictor: &TrainedPredictor,
    dataset: &Dataset,
    split: &GroupSplit,
    validation_groups: &[usize],
    targets: &[f64],
    seed: u64,
    clock: Clock,
) -> Result<ValidationReport> {
    check_targets(targets)?;
    if validation_groups.is_empty() {
        return Err(Error::arg("validation set is empty"));
    }
    let runs = run_groups(dataset, split, validation_groups, predictor.algorithm, predictor.k, seed, clock)?;
    validate_runs(predictor, dataset.id(), &runs, targets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub training_groups: Vec<usize>,
    pub validation_groups: Vec<usize>,
    pub predictor: TrainedPredictor,
    pub report: ValidationReport,
}

/// Per-fold reports plus a summary pooled over every validated group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: FoldAssignment,
    pub per_fold: Vec<FoldReport>,
    pub pooled: ValidationReport,
}

impl CrossValidation {
    /// Every detail row, fold by fold.
    pub fn detail(&self) -> impl Iterator<Item = &ValidationDetail> {
        self.per_fold.iter().flat_map(|f| f.report.detail.iter())
    }

    pub fn write_summary_json<W: Write>(&self, out: &mut W) -> Result<()> {
        serde_json::to_writer_pretty(&mut *out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// `group_id,target,stop_iteration,achieved_accuracy,iter_fraction,time_fraction`.
    pub fn write_detail_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        write_detail_csv(self.detail(), out)
    }
}

pub fn write_detail_csv<'a, W: Write>(rows: impl Iterator<Item = &'a ValidationDetail>, out: &mut W) -> Result<()> {
    writeln!(out, "group_id,target,stop_iteration,achieved_accuracy,iter_fraction,time_fraction")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.group_id, r.target, r.stop_iteration, r.achieved_accuracy, r.iter_fraction, r.time_fraction
        )?;
    }
    Ok(())
}

/// k-fold cross-validation over the groups of `split`.
///
/// Every group is run to convergence exactly once; fold `f` trains on the
/// runs outside `f` and validates on the runs inside it.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    dataset: &Dataset,
    split: &GroupSplit,
    folds: usize,
    algorithm: Algorithm,
    k: usize,
    targets: &[f64],
    seed: u64,
    clock: Clock,
) -> Result<CrossValidation> {
    check_targets(targets)?;
    let assignment = kfold_split(split, folds, derive_seed(seed, stream::FOLD, 0))?;
    let all: Vec<usize> = (0..split.len()).collect();
    let runs = run_groups(dataset, split, &all, algorithm, k, seed, clock)?;
    let mut per_fold = Vec::with_capacity(folds);
    for f in 0..folds {
        let training_groups = assignment.groups_outside_fold(f);
        let validation_groups = assignment.groups_in_fold(f);
        let train_runs: Vec<GroupRun> = training_groups.iter().map(|&g| runs[g].clone()).collect();
        let val_runs: Vec<GroupRun> = validation_groups.iter().map(|&g| runs[g].clone()).collect();
        let predictor = train_from_runs(&train_runs, algorithm, k, dataset.id())?;
        let report = validate_runs(&predictor, dataset.id(), &val_runs, targets)?;
        per_fold.push(FoldReport {
            fold: f,
            training_groups,
            validation_groups,
            predictor,
            report,
        });
    }
    let detail: Vec<ValidationDetail> = per_fold.iter().flat_map(|f| f.report.detail.iter().cloned()).collect();
    let thresholds: Vec<f64> = targets.iter().map(|_| f64::NAN).collect();
    let mut summary = summarize(targets, &thresholds, &detail);
    for s in &mut summary {
        // thresholds differ per fold; report their mean
        let ts: Vec<f64> = per_fold
            .iter()
            .flat_map(|f| f.report.summary.iter())
            .filter(|x| x.target == s.target)
            .map(|x| x.threshold)
            .collect();
        s.threshold = mean_std(&ts).0;
    }
    let training_time_seconds =
        mean_std(&per_fold.iter().map(|f| f.predictor.training_time_seconds).collect::<Vec<_>>()).0;
    let pooled = ValidationReport {
        algorithm,
        k,
        dataset_id: dataset.id().to_string(),
        predictor_dataset_id: dataset.id().to_string(),
        training_time_seconds,
        summary,
        detail,
    };
    Ok(CrossValidation {
        folds: assignment,
        per_fold,
        pooled,
    })
}
