//! Lloyd's k-means with per-iteration tracing.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::dataset::{sample_distinct, Dataset};
use crate::error::{Error, Result};
use crate::trace::{Algorithm, Clock, IterationTrace, Observer, Outcome, TraceBuilder};

pub const DEFAULT_MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `k` distinct data points drawn uniformly without replacement.
    #[default]
    UniformSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub init: Init,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            seed,
            init: Init::UniformSample,
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
        Ok(())
    }
}

/// Centers, labels and objective after some iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansState {
    pub centers: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub iteration: usize,
    pub objective: f64,
}

/// Result of [`run_kmeans`].
#[derive(Debug, Clone)]
pub struct KMeansRun {
    pub trace: IterationTrace,
    pub state: KMeansState,
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn init_centers(dataset: &Dataset, config: &KMeansConfig) -> Result<Vec<Vec<f64>>> {
    config.validate(dataset.len())?;
    match config.init {
        Init::UniformSample => Ok(sample_distinct(dataset.len(), config.k, config.seed)
            .into_iter()
            .map(|i| dataset.point(i).to_vec())
            .collect()),
    }
}

/// Nearest center under squared Euclidean distance; ties go to the lowest index.
pub fn assign(dataset: &Dataset, centers: &[Vec<f64>]) -> Result<Vec<usize>> {
    if centers.is_empty() {
        return Err(Error::arg("at least one center is required"));
    }
    if let Some(c) = centers.iter().position(|c| c.len() != dataset.dim()) {
        return Err(Error::arg(format!(
            "center {c} has dimension {}, dataset has {}",
            centers[c].len(),
            dataset.dim()
        )));
    }
    Ok(dataset.points().map(|p| nearest(p, centers).0).collect())
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, sq_dist(p, &centers[0]));
    for (c, center) in centers.iter().enumerate().skip(1) {
        let d = sq_dist(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Cluster means; see [`recompute_centers_tracked`] for the empty-cluster rule.
pub fn recompute_centers(dataset: &Dataset, labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    recompute_centers_tracked(dataset, labels, k).0
}

/// Cluster means plus the ids of clusters that were empty.
///
/// An empty cluster's center is moved onto the point farthest from its own
/// (freshly recomputed) center; each repair uses a different point.
pub fn recompute_centers_tracked(
    dataset: &Dataset,
    labels: &[usize],
    k: usize,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = dataset.dim();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in dataset.points().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            let inv = c as f64;
            s.iter_mut().for_each(|v| *v /= inv);
        }
    }
    let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    if !empty.is_empty() {
        let mut dist: Vec<(usize, f64)> = dataset
            .points()
            .zip(labels)
            .enumerate()
            .map(|(i, (p, &l))| (i, sq_dist(p, &sums[l])))
            .collect();
        // farthest first, lowest index among equals
        dist.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (&c, &(i, _)) in empty.iter().zip(&dist) {
            sums[c] = dataset.point(i).to_vec();
        }
    }
    (sums, empty)
}

/// Sum of squared distances from each point to its assigned center.
pub fn objective(dataset: &Dataset, labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    dataset
        .points()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum()
}

/// Alternates assignment and center updates until the labels stop changing,
/// `max_iterations` is reached, or `observer` breaks.
///
/// Iteration `i` assigns labels with the current centers, moves the centers
/// to the cluster means and records `J_i` against those means.
pub fn run_kmeans(
    dataset: &Dataset,
    config: &KMeansConfig,
    clock: Clock,
    observer: Observer<'_>,
) -> Result<KMeansRun> {
    let mut centers = init_centers(dataset, config)?;
    let mut tb = TraceBuilder::new(Algorithm::KMeans, clock);
    loop {
        let iteration = tb.len() + 1;
        let labels = assign(dataset, &centers)?;
        let (next, empty) = recompute_centers_tracked(dataset, &labels, config.k);
        if !empty.is_empty() {
            tb.event(
                iteration,
                "empty_cluster_reseed",
                format!("clusters {empty:?} reseeded at farthest points"),
            );
        }
        let converged = empty.is_empty() && tb.last_labels() == Some(labels.as_slice());
        centers = next;
        let j = objective(dataset, &labels, &centers);
        let flow = tb.push(j, labels.clone(), observer);
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
            let trace = tb.finish(outcome);
            return Ok(KMeansRun {
                state: KMeansState {
                    centers,
                    labels,
                    iteration,
                    objective: j,
                },
                trace,
            });
        }
    }
}
