//! Datasets, synthetic mixtures, random sampling groups and k-fold assignment.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Dense row-major matrix of `d`-dimensional feature points.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    id: String,
    dim: usize,
    values: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from row-major `values`; every coordinate must be finite.
    pub fn new(id: impl Into<String>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("dataset dimension must be positive"));
        }
        if values.is_empty() {
            return Err(Error::arg("dataset must contain at least one point"));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::arg(format!(
                "{} values do not form rows of length {dim}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite coordinate in point {} (axis {})",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            id: id.into(),
            dim,
            values,
        })
    }

    pub fn from_rows(id: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::arg(format!(
                "row {bad} has {} values, expected {dim}",
                rows[bad].len()
            )));
        }
        Self::new(id, dim, rows.concat())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Copies the listed points, in order, into a new dataset.
    pub fn subset(&self, indices: &[usize], id: impl Into<String>) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::arg(format!(
                    "index {i} out of range for dataset of {} points",
                    self.len()
                )));
            }
            values.extend_from_slice(self.point(i));
        }
        Self::new(id, self.dim, values)
    }

    /// Per-axis population variance.
    pub fn axis_variance(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut mean = vec![0.0; self.dim];
        for p in self.points() {
            for (m, x) in mean.iter_mut().zip(p) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.dim];
        for p in self.points() {
            for ((v, x), m) in var.iter_mut().zip(p).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        var.iter_mut().for_each(|v| *v /= n);
        var
    }
}

/// Reads a comma-separated file of decimal numbers, one point per row.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&text, has_header, id)
}

/// Parses CSV text; row numbers in errors are 1-based file lines.
pub fn parse_csv(text: &str, has_header: bool, id: impl Into<String>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut dim = 0usize;
    let mut values = Vec::new();
    let mut skip_header = has_header;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            row: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if skip_header {
            skip_header = false;
            continue;
        }
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if dim == 0 {
            dim = record.len();
        } else if record.len() != dim {
            return Err(Error::Parse {
                row,
                message: format!("expected {dim} fields, found {}", record.len()),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                message: format!("column {}: '{cell}' is not a number", col + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    message: format!("column {}: '{cell}' is not finite", col + 1),
                });
            }
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(Error::Parse {
            row: 1,
            message: "no data rows".into(),
        });
    }
    Dataset::new(id, dim, values)
}

/// Writes one row per point using the shortest exact round-trip decimal form.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_csv(dataset, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(dataset: &Dataset, out: &mut W) -> Result<()> {
    let mut line = String::new();
    for p in dataset.points() {
        line.clear();
        for (j, v) in p.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// One axis-aligned Gaussian component of a synthetic mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthComponent {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_points: usize,
    pub dim: usize,
    pub components: Vec<SynthComponent>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::arg("n_points must be positive"));
        }
        if self.dim == 0 {
            return Err(Error::arg("dim must be positive"));
        }
        if self.components.is_empty() {
            return Err(Error::arg("components must not be empty"));
        }
        for (c, comp) in self.components.iter().enumerate() {
            if comp.mean.len() != self.dim {
                return Err(Error::arg(format!(
                    "components[{c}].mean has length {}, expected dim {}",
                    comp.mean.len(),
                    self.dim
                )));
            }
            if comp.std.len() != self.dim {
                return Err(Error::arg(format!(
                    "components[{c}].std has length {}, expected dim {}",
                    comp.std.len(),
                    self.dim
                )));
            }
            if comp.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::arg(format!("components[{c}].mean must be finite")));
            }
            if comp.std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(Error::arg(format!(
                    "components[{c}].std must be finite and non-negative"
                )));
            }
            if !(comp.weight.is_finite() && comp.weight > 0.0) {
                return Err(Error::arg(format!("components[{c}].weight must be positive")));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!(
                "components weight must sum to 1 (got {total})"
            )));
        }
        Ok(())
    }
}

/// Draws `spec.n_points` points from the mixture.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    generate_synthetic_labeled(spec, seed).map(|(d, _)| d)
}

/// Like [`generate_synthetic`] but also returns the component each point was drawn from.
pub fn generate_synthetic_labeled(spec: &SynthSpec, seed: u64) -> Result<(Dataset, Vec<usize>)> {
    spec.validate()?;
    let mut rng = rng::seeded(seed);
    let picker = WeightedIndex::new(spec.components.iter().map(|c| c.weight))
        .map_err(|e| Error::arg(format!("component weights: {e}")))?;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut values = Vec::with_capacity(spec.n_points * spec.dim);
    let mut labels = Vec::with_capacity(spec.n_points);
    for _ in 0..spec.n_points {
        let c = picker.sample(&mut rng);
        let comp = &spec.components[c];
        for (m, s) in comp.mean.iter().zip(&comp.std) {
            let z: f64 = unit.sample(&mut rng);
            values.push(m + s * z);
        }
        labels.push(c);
    }
    Ok((Dataset::new("synthetic", spec.dim, values)?, labels))
}

/// Disjoint equal-size random samples of a dataset's indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSplit {
    pub dataset_size: usize,
    pub group_size: usize,
    pub seed: u64,
    pub groups: Vec<Vec<usize>>,
}

impl GroupSplit {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Materializes group `g` as its own dataset.
    pub fn group_dataset(&self, dataset: &Dataset, g: usize) -> Result<Dataset> {
        let indices = self
            .groups
            .get(g)
            .ok_or_else(|| Error::arg(format!("group {g} does not exist")))?;
        dataset.subset(indices, format!("{}#g{g}", dataset.id()))
    }
}

/// Shuffles indices with `seed` and cuts `floor(n / group_size)` groups; the
/// `n mod group_size` leftover indices are dropped.
pub fn random_groups(dataset: &Dataset, group_size: usize, seed: u64) -> Result<GroupSplit> {
    let n = dataset.len();
    if group_size < 2 {
        return Err(Error::arg("group_size must be at least 2"));
    }
    if group_size > n {
        return Err(Error::arg(format!(
            "group_size {group_size} exceeds dataset size {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let groups = order
        .chunks_exact(group_size)
        .map(<[usize]>::to_vec)
        .collect();
    Ok(GroupSplit {
        dataset_size: n,
        group_size,
        seed,
        groups,
    })
}

/// Fold membership for each group of a [`GroupSplit`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub folds: usize,
    pub seed: u64,
    pub fold_of_group: Vec<usize>,
}

impl FoldAssignment {
    /// Group ids in fold `f`, ascending.
    pub fn groups_in_fold(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of_group.len())
            .filter(|&g| self.fold_of_group[g] == f)
            .collect()
    }

    /// Group ids outside fold `f`, ascending.
    pub fn groups_outside_fold(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of_group.len())
            .filter(|&g| self.fold_of_group[g] != f)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.folds];
        for &f in &self.fold_of_group {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles group ids with `seed` and deals them round-robin into `folds` folds.
pub fn kfold_split(split: &GroupSplit, folds: usize, seed: u64) -> Result<FoldAssignment> {
    if folds < 2 {
        return Err(Error::arg("folds must be at least 2"));
    }
    if folds > split.len() {
        return Err(Error::arg(format!(
            "{folds} folds requested but only {} groups available",
            split.len()
        )));
    }
    let mut order: Vec<usize> = (0..split.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut fold_of_group = vec![0; split.len()];
    for (pos, g) in order.into_iter().enumerate() {
        fold_of_group[g] = pos % folds;
    }
    Ok(FoldAssignment {
        folds,
        seed,
        fold_of_group,
    })
}

/// `k` distinct indices in `0..n`, uniformly without replacement.
pub(crate) fn sample_distinct(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::seeded(seed);
    rand::seq::index::sample(&mut rng, n, k).into_vec()
}
