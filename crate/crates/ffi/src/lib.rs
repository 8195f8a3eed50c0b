//! C ABI for tailcut.
//!
//! Objects are opaque handles created by `tc_*_new`/`tc_*_load` style calls and
//! released with the matching `tc_*_free`. Fallible calls return a
//! [`TcStatus`]; on failure the message is available from
//! [`tc_last_error_message`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use tailcut::accuracy::pair_counts;
use tailcut::dataset::{load_csv, random_groups, Dataset};
use tailcut::earlystop::{run_with_early_stop, train_predictor, AlgorithmConfig, RunReport, StopPolicy, TrainedPredictor};
use tailcut::regression::{threshold_for_accuracy, QuadraticModel};
use tailcut::trace::{Algorithm, Clock, IterationTrace, Outcome};
use tailcut::{computation_cost, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    Parse = 3,
    Data = 4,
    Numeric = 5,
    SingularObjective = 6,
    RankDeficient = 7,
    DegenerateComponent = 8,
    UnknownInstance = 9,
    Training = 10,
    Io = 11,
    Json = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcAlgorithm {
    KMeans = 0,
    Em = 1,
}

/// `Wall` measures time; `Iterations` counts one unit per iteration.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcClock {
    Wall = 0,
    Iterations = 1,
}

impl From<TcAlgorithm> for Algorithm {
    fn from(a: TcAlgorithm) -> Self {
        match a {
            TcAlgorithm::KMeans => Algorithm::KMeans,
            TcAlgorithm::Em => Algorithm::Em,
        }
    }
}

impl From<TcClock> for Clock {
    fn from(c: TcClock) -> Self {
        match c {
            TcClock::Wall => Clock::Monotonic,
            TcClock::Iterations => Clock::Iterations,
        }
    }
}

/// A dataset of `len` points in `dim` dimensions.
pub struct TcDataset(Dataset);

/// A trained stop-threshold predictor.
pub struct TcPredictor(TrainedPredictor);

/// The report and trace of one clustering run.
pub struct TcRun {
    report: RunReport,
    trace: IterationTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TcStatus {
    match e {
        Error::Argument(_) => TcStatus::InvalidArgument,
        Error::Parse { .. } => TcStatus::Parse,
        Error::Data(_) => TcStatus::Data,
        Error::Numeric(_) => TcStatus::Numeric,
        Error::SingularObjective => TcStatus::SingularObjective,
        Error::RankDeficient { .. } => TcStatus::RankDeficient,
        Error::DegenerateComponent { .. } => TcStatus::DegenerateComponent,
        Error::UnknownInstance { .. } => TcStatus::UnknownInstance,
        Error::Training { .. } => TcStatus::Training,
        Error::Io(_) => TcStatus::Io,
        Error::Json(_) => TcStatus::Json,
    }
}

enum Failure {
    Core(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard<F>(f: F) -> TcStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TcStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("{what} must not be null"));
            TcStatus::NullPointer
        }
        Err(_) => {
            set_last_error("internal panic".into());
            TcStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Core(Error::Argument(format!("{what} is not valid UTF-8"))))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failed call on this thread, or NULL. Owned by the
/// library; valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from a `tc_*` function that documents a caller-owned string.
#[no_mangle]
pub unsafe extern "C" fn tc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Copies `n * dim` row-major values into a new dataset.
///
/// # Safety
/// `values` must point to `n * dim` readable doubles; `id` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn tc_dataset_new(
    values: *const f64,
    n: usize,
    dim: usize,
    id: *const c_char,
    out_dataset: *mut *mut TcDataset,
) -> TcStatus {
    guard(|| {
        let slot = out(out_dataset, "out_dataset")?;
        if values.is_null() {
            return Err(Failure::Null("values"));
        }
        let len = n.checked_mul(dim).ok_or_else(|| Error::Argument("n * dim overflows".into()))?;
        let id = if id.is_null() { "ffi" } else { c_str(id, "id")? };
        let data = Dataset::new(id, dim, slice::from_raw_parts(values, len).to_vec())?;
        *slot = boxed(TcDataset(data));
        Ok(())
    })
}

/// Loads a CSV file, one point per row.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn tc_dataset_load_csv(
    path: *const c_char,
    has_header: bool,
    out_dataset: *mut *mut TcDataset,
) -> TcStatus {
    guard(|| {
        let slot = out(out_dataset, "out_dataset")?;
        let data = load_csv(c_str(path, "path")?, has_header)?;
        *slot = boxed(TcDataset(data));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn tc_dataset_len(dataset: *const TcDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `dataset` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn tc_dataset_dim(dataset: *const TcDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.dim())
}

/// # Safety
/// `dataset` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tc_dataset_free(dataset: *mut TcDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Rand Index of two labelings of the same `n` points.
///
/// # Safety
/// `a` and `b` must each point to `n` readable labels.
#[no_mangle]
pub unsafe extern "C" fn tc_rand_index(a: *const usize, b: *const usize, n: usize, out_value: *mut f64) -> TcStatus {
    guard(|| {
        let slot = out(out_value, "out_value")?;
        if a.is_null() || b.is_null() {
            return Err(Failure::Null("labels"));
        }
        let counts = pair_counts(slice::from_raw_parts(a, n), slice::from_raw_parts(b, n))?;
        *slot = counts.rand_index();
        Ok(())
    })
}

/// `max(0, beta0 + beta1 r + beta2 r^2)` at `target`.
#[no_mangle]
pub extern "C" fn tc_threshold_for_accuracy(beta0: f64, beta1: f64, beta2: f64, target: f64) -> f64 {
    threshold_for_accuracy(&QuadraticModel::from_coefficients(beta0, beta1, beta2), target)
}

/// Dollar cost of `seconds` at `price_per_hour`.
///
/// # Safety
/// `out_dollars` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_computation_cost(price_per_hour: f64, seconds: f64, out_dollars: *mut f64) -> TcStatus {
    guard(|| {
        let slot = out(out_dollars, "out_dollars")?;
        *slot = computation_cost(price_per_hour, seconds)?;
        Ok(())
    })
}

/// Splits `dataset` into random groups of `group_size` points and trains a
/// predictor on the first `training_groups` of them (0 means all).
///
/// # Safety
/// `dataset` must be a live handle; `out_predictor` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn tc_predictor_train(
    dataset: *const TcDataset,
    algorithm: TcAlgorithm,
    k: usize,
    group_size: usize,
    training_groups: usize,
    seed: u64,
    clock: TcClock,
    out_predictor: *mut *mut TcPredictor,
) -> TcStatus {
    guard(|| {
        let slot = out(out_predictor, "out_predictor")?;
        let data = &deref(dataset, "dataset")?.0;
        let split = random_groups(data, group_size, seed)?;
        let count = if training_groups == 0 { split.len() } else { training_groups };
        if count > split.len() {
            return Err(Error::Argument(format!("only {} groups available", split.len())).into());
        }
        let groups: Vec<usize> = (0..count).collect();
        let p = train_predictor(data, &split, &groups, algorithm.into(), k, seed, clock.into())?;
        *slot = boxed(TcPredictor(p));
        Ok(())
    })
}

/// Parses a predictor from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn tc_predictor_from_json(json: *const c_char, out_predictor: *mut *mut TcPredictor) -> TcStatus {
    guard(|| {
        let slot = out(out_predictor, "out_predictor")?;
        let p = TrainedPredictor::from_json(c_str(json, "json")?)?;
        *slot = boxed(TcPredictor(p));
        Ok(())
    })
}

/// JSON form of a predictor; free the result with `tc_string_free`.
///
/// # Safety
/// `predictor` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_predictor_to_json(predictor: *const TcPredictor, out_json: *mut *mut c_char) -> TcStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        let text = deref(predictor, "predictor")?.0.to_json()?;
        *slot = CString::new(text).map_err(|e| Error::Data(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Writes `[beta0, beta1, beta2]`.
///
/// # Safety
/// `out_coefficients` must have room for three doubles.
#[no_mangle]
pub unsafe extern "C" fn tc_predictor_coefficients(predictor: *const TcPredictor, out_coefficients: *mut f64) -> TcStatus {
    guard(|| {
        let p = deref(predictor, "predictor")?;
        if out_coefficients.is_null() {
            return Err(Failure::Null("out_coefficients"));
        }
        let c = p.0.model.coefficients();
        ptr::copy_nonoverlapping(c.as_ptr(), out_coefficients, 3);
        Ok(())
    })
}

/// # Safety
/// `predictor` must be a live handle; `out_threshold` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_predictor_threshold(
    predictor: *const TcPredictor,
    target: f64,
    out_threshold: *mut f64,
) -> TcStatus {
    guard(|| {
        let slot = out(out_threshold, "out_threshold")?;
        let p = deref(predictor, "predictor")?;
        *slot = StopPolicy::new(&p.0.model, target, 2)?.threshold;
        Ok(())
    })
}

/// # Safety
/// `predictor` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tc_predictor_free(predictor: *mut TcPredictor) {
    if !predictor.is_null() {
        drop(Box::from_raw(predictor));
    }
}

/// Clusters `dataset`. With a predictor the run stops once the objective
/// change rate falls below the threshold for `target_accuracy`; with NULL it
/// runs to convergence and `target_accuracy` is ignored. The predictor's
/// algorithm and `k` are used when one is given.
///
/// # Safety
/// `dataset` must be a live handle, `predictor` a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn tc_run(
    dataset: *const TcDataset,
    algorithm: TcAlgorithm,
    k: usize,
    seed: u64,
    predictor: *const TcPredictor,
    target_accuracy: f64,
    clock: TcClock,
    out_run: *mut *mut TcRun,
) -> TcStatus {
    guard(|| {
        let slot = out(out_run, "out_run")?;
        let data = &deref(dataset, "dataset")?.0;
        let (config, policy) = match predictor.as_ref() {
            Some(p) => (
                AlgorithmConfig::new(p.0.algorithm, p.0.k, seed),
                StopPolicy::new(&p.0.model, target_accuracy, 2)?,
            ),
            None => (
                AlgorithmConfig::new(algorithm.into(), k, seed),
                StopPolicy::with_threshold(0.0, 2)?,
            ),
        };
        config.validate(data.len())?;
        let (report, trace) = run_with_early_stop(data, &config, &policy, clock.into())?;
        *slot = boxed(TcRun { report, trace });
        Ok(())
    })
}

/// Number of iterations performed.
///
/// # Safety
/// `run` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn tc_run_iterations(run: *const TcRun) -> usize {
    run.as_ref().map_or(0, |r| r.report.stopped_iteration)
}

/// True when the stop rule ended the run before convergence.
///
/// # Safety
/// `run` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn tc_run_stopped_early(run: *const TcRun) -> bool {
    run.as_ref().is_some_and(|r| r.trace.outcome == Outcome::StoppedEarly)
}

/// Objective value at 1-based `iteration`.
///
/// # Safety
/// `run` must be a live handle; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_run_objective(run: *const TcRun, iteration: usize, out_value: *mut f64) -> TcStatus {
    guard(|| {
        let slot = out(out_value, "out_value")?;
        let r = deref(run, "run")?;
        if iteration == 0 || iteration > r.trace.len() {
            return Err(Error::Argument(format!("iteration {iteration} outside 1..={}", r.trace.len())).into());
        }
        *slot = r.trace.record(iteration).objective;
        Ok(())
    })
}

/// Copies the final labels into `out_labels`, which must hold `capacity`
/// entries; `capacity` must be at least the dataset length.
///
/// # Safety
/// `run` must be a live handle; `out_labels` must have room for `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn tc_run_labels(run: *const TcRun, out_labels: *mut usize, capacity: usize) -> TcStatus {
    guard(|| {
        let r = deref(run, "run")?;
        if out_labels.is_null() {
            return Err(Failure::Null("out_labels"));
        }
        let labels = r.report.final_labels.labels();
        if capacity < labels.len() {
            return Err(Error::Argument(format!("buffer holds {capacity} labels, need {}", labels.len())).into());
        }
        ptr::copy_nonoverlapping(labels.as_ptr(), out_labels, labels.len());
        Ok(())
    })
}

/// # Safety
/// `run` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tc_run_free(run: *mut TcRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
