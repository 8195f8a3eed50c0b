//! Expectation-maximization for diagonal-covariance Gaussian mixtures.
//!
//! One traced iteration is an M step followed by the E step under the new
//! parameters, so iteration `i` reports the log-likelihood of `theta_i` and
//! the hard partition it induces. The initial parameters get one untraced
//! E step to seed the first M step.

use std::f64::consts::PI;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::dataset::{sample_distinct, Dataset};
use crate::error::{Error, Result};
use crate::trace::{Algorithm, Clock, IterationTrace, Observer, Outcome, TraceBuilder};

pub const DEFAULT_MAX_ITERATIONS: usize = 1000;
pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EMConfig {
    pub k: usize,
    pub max_iterations: usize,
    pub seed: u64,
    /// Run is complete once the relative log-likelihood change drops below this.
    pub full_convergence_epsilon: f64,
    /// Per-axis variance floor as a fraction of the dataset's variance on that axis.
    pub variance_floor: f64,
}

impl EMConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            seed,
            full_convergence_epsilon: DEFAULT_EPSILON,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::arg("k must be at least 1"));
        }
        if self.k > n {
            return Err(Error::arg(format!(
                "k = {} exceeds the {n} available points",
                self.k
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::arg("max_iterations must be positive"));
        }
        if self.full_convergence_epsilon.is_nan() || self.full_convergence_epsilon <= 0.0 {
            return Err(Error::arg("full_convergence_epsilon must be positive"));
        }
        if self.variance_floor.is_nan() || self.variance_floor <= 0.0 {
            return Err(Error::arg("variance_floor must be positive"));
        }
        Ok(())
    }
}

/// Absolute per-axis variance floors for `dataset`.
///
/// Axes with zero spread fall back to `variance_floor` itself.
pub fn variance_floors(dataset: &Dataset, variance_floor: f64) -> Vec<f64> {
    dataset
        .axis_variance()
        .into_iter()
        .map(|v| {
            let f = v * variance_floor;
            if f > 0.0 {
                f
            } else {
                variance_floor
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// `log(pi_c) + log N(x | mu_c, diag(var_c))` for every component.
    fn component_log_densities(&self, x: &[f64], out: &mut [f64]) {
        for (c, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for ((xa, m), v) in x.iter().zip(&self.means[c]).zip(&self.variances[c]) {
                let d = xa - m;
                acc += (2.0 * PI * v).ln() + d * d / v;
            }
            *slot = self.weights[c].ln() - 0.5 * acc;
        }
    }

    fn check(&self, dataset: &Dataset) -> Result<()> {
        let k = self.k();
        if k == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(Error::arg("mixture must have k weights, means and variances"));
        }
        if self
            .means
            .iter()
            .chain(&self.variances)
            .any(|v| v.len() != dataset.dim())
        {
            return Err(Error::arg(format!(
                "mixture dimension does not match dataset dimension {}",
                dataset.dim()
            )));
        }
        Ok(())
    }
}

/// Posterior membership probabilities, row-major `n x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub k: usize,
    pub matrix: Vec<f64>,
    /// Per-point `log p(x_i)`.
    pub point_log_likelihood: Vec<f64>,
    pub log_likelihood: f64,
}

impl Responsibilities {
    pub fn n(&self) -> usize {
        self.point_log_likelihood.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.k..(i + 1) * self.k]
    }

    /// Argmax component per point, lowest index on ties.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.matrix
            .chunks_exact(self.k)
            .map(|row| {
                let mut best = 0;
                for c in 1..row.len() {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

/// E step with log-sum-exp normalization.
pub fn e_step(dataset: &Dataset, model: &GaussianMixture) -> Result<Responsibilities> {
    model.check(dataset)?;
    let k = model.k();
    let mut matrix = vec![0.0; dataset.len() * k];
    let mut point_ll = Vec::with_capacity(dataset.len());
    for (i, (x, row)) in dataset.points().zip(matrix.chunks_exact_mut(k)).enumerate() {
        model.component_log_densities(x, row);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numeric(format!(
                "log-likelihood of point {i} is not finite"
            )));
        }
        let mut sum = 0.0;
        for l in row.iter_mut() {
            *l = (*l - max).exp();
            sum += *l;
        }
        row.iter_mut().for_each(|r| *r /= sum);
        point_ll.push(max + sum.ln());
    }
    let log_likelihood = point_ll.iter().sum();
    if !f64::is_finite(log_likelihood) {
        return Err(Error::Numeric("total log-likelihood is not finite".into()));
    }
    Ok(Responsibilities {
        k,
        matrix,
        point_log_likelihood: point_ll,
        log_likelihood,
    })
}

/// M step; fails on the first component whose total responsibility is zero.
pub fn m_step(
    dataset: &Dataset,
    resp: &Responsibilities,
    config: &EMConfig,
) -> Result<GaussianMixture> {
    let floors = variance_floors(dataset, config.variance_floor);
    let (model, degenerate) = m_step_partial(dataset, resp, &floors)?;
    match degenerate.first() {
        Some(&component) => Err(Error::DegenerateComponent { component }),
        None => Ok(model),
    }
}

/// M step that leaves degenerate components untouched and lists them.
fn m_step_partial(
    dataset: &Dataset,
    resp: &Responsibilities,
    floors: &[f64],
) -> Result<(GaussianMixture, Vec<usize>)> {
    let (n, k, dim) = (dataset.len(), resp.k, dataset.dim());
    if resp.n() != n || resp.matrix.len() != n * k {
        return Err(Error::arg(format!(
            "responsibilities are for {} points, dataset has {n}",
            resp.n()
        )));
    }
    let mut totals = vec![0.0; k];
    let mut means = vec![vec![0.0; dim]; k];
    for (x, row) in dataset.points().zip(resp.matrix.chunks_exact(k)) {
        for c in 0..k {
            totals[c] += row[c];
            for (m, xa) in means[c].iter_mut().zip(x) {
                *m += row[c] * xa;
            }
        }
    }
    let degenerate: Vec<usize> = (0..k)
        .filter(|&c| totals[c].is_nan() || totals[c] <= f64::MIN_POSITIVE)
        .collect();
    for c in 0..k {
        if !degenerate.contains(&c) {
            means[c].iter_mut().for_each(|m| *m /= totals[c]);
        }
    }
    let mut variances = vec![vec![0.0; dim]; k];
    for (x, row) in dataset.points().zip(resp.matrix.chunks_exact(k)) {
        for c in 0..k {
            for ((v, xa), m) in variances[c].iter_mut().zip(x).zip(&means[c]) {
                let d = xa - m;
                *v += row[c] * d * d;
            }
        }
    }
    for c in 0..k {
        for (v, floor) in variances[c].iter_mut().zip(floors) {
            *v = if degenerate.contains(&c) {
                *floor
            } else {
                (*v / totals[c]).max(*floor)
            };
        }
    }
    let weights = totals.iter().map(|t| t / n as f64).collect();
    Ok((
        GaussianMixture {
            weights,
            means,
            variances,
        },
        degenerate,
    ))
}

/// Seeded start: sampled points as means, uniform weights, global variances.
pub fn initial_mixture(dataset: &Dataset, config: &EMConfig) -> Result<GaussianMixture> {
    config.validate(dataset.len())?;
    let floors = variance_floors(dataset, config.variance_floor);
    let global: Vec<f64> = dataset
        .axis_variance()
        .iter()
        .zip(&floors)
        .map(|(v, f)| v.max(*f))
        .collect();
    let k = config.k;
    Ok(GaussianMixture {
        weights: vec![1.0 / k as f64; k],
        means: sample_distinct(dataset.len(), k, config.seed)
            .into_iter()
            .map(|i| dataset.point(i).to_vec())
            .collect(),
        variances: vec![global; k],
    })
}

/// Result of [`run_em`].
#[derive(Debug, Clone)]
pub struct EMRun {
    pub trace: IterationTrace,
    pub model: GaussianMixture,
}

/// Iterates M and E steps until the relative log-likelihood change falls
/// below `full_convergence_epsilon`, `max_iterations` is reached, or
/// `observer` breaks.
///
/// A component that loses all responsibility is restarted at the point with
/// the lowest likelihood under the previous parameters; the restart is logged
/// as a trace event.
pub fn run_em(
    dataset: &Dataset,
    config: &EMConfig,
    clock: Clock,
    observer: Observer<'_>,
) -> Result<EMRun> {
    let mut model = initial_mixture(dataset, config)?;
    let floors = variance_floors(dataset, config.variance_floor);
    let global: Vec<f64> = dataset
        .axis_variance()
        .iter()
        .zip(&floors)
        .map(|(v, f)| v.max(*f))
        .collect();
    let mut tb = TraceBuilder::new(Algorithm::Em, clock);
    let mut resp = e_step(dataset, &model)?;
    let mut prev_ll: Option<f64> = None;
    loop {
        let iteration = tb.len() + 1;
        let (mut next, degenerate) = m_step_partial(dataset, &resp, &floors)?;
        if !degenerate.is_empty() {
            reinitialize(dataset, &resp, &mut next, &degenerate, &global);
            tb.event(
                iteration,
                "degenerate_component_reinit",
                format!("components {degenerate:?} restarted at lowest-likelihood points"),
            );
        }
        model = next;
        resp = e_step(dataset, &model)?;
        let ll = resp.log_likelihood;
        let converged = prev_ll.is_some_and(|p| relative_change(p, ll) < config.full_convergence_epsilon);
        let flow = tb.push(ll, resp.hard_labels(), observer);
        prev_ll = Some(ll);
        let outcome = if converged {
            Some(Outcome::Converged)
        } else if flow == ControlFlow::Break(()) {
            Some(Outcome::StoppedEarly)
        } else if iteration >= config.max_iterations {
            Some(Outcome::Truncated)
        } else {
            None
        };
        if let Some(outcome) = outcome {
            return Ok(EMRun {
                trace: tb.finish(outcome),
                model,
            });
        }
    }
}

fn relative_change(prev: f64, curr: f64) -> f64 {
    if prev == 0.0 {
        if curr == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (curr - prev).abs() / prev.abs()
    }
}

fn reinitialize(
    dataset: &Dataset,
    resp: &Responsibilities,
    model: &mut GaussianMixture,
    degenerate: &[usize],
    global: &[f64],
) {
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| {
        resp.point_log_likelihood[a]
            .total_cmp(&resp.point_log_likelihood[b])
            .then(a.cmp(&b))
    });
    let n = dataset.len() as f64;
    for (&c, &i) in degenerate.iter().zip(&order) {
        model.means[c] = dataset.point(i).to_vec();
        model.variances[c] = global.to_vec();
        model.weights[c] = 1.0 / n;
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);
}
