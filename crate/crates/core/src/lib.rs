//! Early-stopped k-means and EM clustering.
//!
//! Training groups are clustered to full convergence; for every iteration the
//! relative objective change `h` and the Rand Index `r` against the final
//! partition are recorded, and a quadratic `h(r)` is fitted over all groups.
//! Evaluating that quadratic at a target accuracy gives a change-rate
//! threshold, and later runs stop at the first iteration whose change rate
//! falls to or below it. The [`cost`] module turns the saved time into
//! on-demand dollars.

pub mod accuracy;
pub mod cli;
pub mod cost;
pub mod dataset;
pub mod earlystop;
pub mod em;
pub mod error;
pub mod kmeans;
pub mod regression;
pub mod rng;
pub mod trace;

pub use accuracy::{rand_index, rand_index_naive, PairCounts, Partition};
pub use cost::{build_cost_report, computation_cost, cost_effectiveness, CostReport, CostTimes, PriceTable};
pub use dataset::{generate_synthetic, kfold_split, load_csv, random_groups, save_csv, Dataset, FoldAssignment, GroupSplit, SynthSpec};
pub use earlystop::{
    cross_validate, run_with_early_stop, train_predictor, validate, AlgorithmConfig, CrossValidation, RunReport, StopPolicy,
    TrainedPredictor, ValidationReport,
};
pub use em::{run_em, EMConfig, GaussianMixture};
pub use error::{Error, Result};
pub use kmeans::{run_kmeans, KMeansConfig};
pub use regression::{change_rate, fit_quadratic, threshold_for_accuracy, QuadraticModel, TrainingPairs};
pub use trace::{Algorithm, Clock, IterationRecord, IterationTrace, Outcome};
