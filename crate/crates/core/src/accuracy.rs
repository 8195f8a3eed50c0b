//! Rand Index between two partitions of the same points.
//!
//! Both implementations produce exact integer [`PairCounts`] and divide once,
//! so they agree bit-for-bit.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest input accepted by [`rand_index_naive`].
pub const NAIVE_LIMIT: usize = 10_000;

/// Per-point cluster ids; ids need not be contiguous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Partition {
    labels: Vec<usize>,
}

impl Partition {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl From<Vec<usize>> for Partition {
    fn from(labels: Vec<usize>) -> Self {
        Self::new(labels)
    }
}

impl From<&[usize]> for Partition {
    fn from(labels: &[usize]) -> Self {
        Self::new(labels.to_vec())
    }
}

/// Pair agreement counts: `n11` together in both, `n00` apart in both,
/// `n10` together only in the first, `n01` together only in the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub n11: u128,
    pub n00: u128,
    pub n01: u128,
    pub n10: u128,
}

impl PairCounts {
    pub fn total(&self) -> u128 {
        self.n11 + self.n00 + self.n01 + self.n10
    }

    pub fn rand_index(&self) -> f64 {
        (self.n11 + self.n00) as f64 / self.total() as f64
    }
}

fn choose2(m: u128) -> u128 {
    m * m.saturating_sub(1) / 2
}

fn check(p1: &[usize], p2: &[usize]) -> Result<()> {
    if p1.len() != p2.len() {
        return Err(Error::arg(format!(
            "partitions cover {} and {} points",
            p1.len(),
            p2.len()
        )));
    }
    if p1.len() < 2 {
        return Err(Error::arg("the Rand Index needs at least 2 points"));
    }
    Ok(())
}

/// Pair counts from the label contingency table.
pub fn pair_counts(p1: &[usize], p2: &[usize]) -> Result<PairCounts> {
    check(p1, p2)?;
    let mut cells: HashMap<(usize, usize), u128> = HashMap::new();
    let mut rows: HashMap<usize, u128> = HashMap::new();
    let mut cols: HashMap<usize, u128> = HashMap::new();
    for (&a, &b) in p1.iter().zip(p2) {
        *cells.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let n11: u128 = cells.values().map(|&m| choose2(m)).sum();
    let same1: u128 = rows.values().map(|&m| choose2(m)).sum();
    let same2: u128 = cols.values().map(|&m| choose2(m)).sum();
    let total = choose2(p1.len() as u128);
    let n10 = same1 - n11;
    let n01 = same2 - n11;
    Ok(PairCounts {
        n11,
        n00: total - n11 - n10 - n01,
        n01,
        n10,
    })
}

/// Rand Index in `O(n + |labels1| * |labels2|)`.
pub fn rand_index(p1: &Partition, p2: &Partition) -> Result<f64> {
    Ok(pair_counts(p1.labels(), p2.labels())?.rand_index())
}

/// Pair counts by enumerating all `n(n-1)/2` pairs.
pub fn pair_counts_naive(p1: &[usize], p2: &[usize]) -> Result<PairCounts> {
    check(p1, p2)?;
    if p1.len() > NAIVE_LIMIT {
        return Err(Error::arg(format!(
            "naive Rand Index limited to {NAIVE_LIMIT} points, got {}",
            p1.len()
        )));
    }
    let mut c = PairCounts {
        n11: 0,
        n00: 0,
        n01: 0,
        n10: 0,
    };
    for i in 0..p1.len() {
        for j in i + 1..p1.len() {
            match (p1[i] == p1[j], p2[i] == p2[j]) {
                (true, true) => c.n11 += 1,
                (false, false) => c.n00 += 1,
                (true, false) => c.n10 += 1,
                (false, true) => c.n01 += 1,
            }
        }
    }
    Ok(c)
}

pub fn rand_index_naive(p1: &Partition, p2: &Partition) -> Result<f64> {
    Ok(pair_counts_naive(p1.labels(), p2.labels())?.rand_index())
}
