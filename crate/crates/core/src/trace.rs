//! Per-iteration records shared by the k-means and EM runners.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::ControlFlow;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::change_rate;

/// Source of the `elapsed_seconds` values written into traces.
///
/// `Monotonic` measures wall time since the run started. `Iterations` is a
/// logical clock that advances by exactly one unit per iteration, which makes
/// every time-derived output reproducible byte-for-byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    #[default]
    Monotonic,
    Iterations,
}

impl FromStr for Clock {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "monotonic" | "wall" => Ok(Clock::Monotonic),
            "iterations" | "logical" => Ok(Clock::Iterations),
            other => Err(Error::arg(format!(
                "unknown clock '{other}' (expected 'wall' or 'iterations')"
            ))),
        }
    }
}

pub(crate) struct Stopwatch {
    clock: Clock,
    start: Instant,
}

impl Stopwatch {
    pub(crate) fn start(clock: Clock) -> Self {
        Self {
            clock,
            start: Instant::now(),
        }
    }

    pub(crate) fn elapsed(&self, iteration: usize) -> f64 {
        match self.clock {
            Clock::Monotonic => self.start.elapsed().as_secs_f64(),
            Clock::Iterations => iteration as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    KMeans,
    Em,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::KMeans => "kmeans",
            Algorithm::Em => "em",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kmeans" | "k-means" => Ok(Algorithm::KMeans),
            "em" | "gmm" => Ok(Algorithm::Em),
            other => Err(Error::arg(format!(
                "unknown algorithm '{other}' (expected 'kmeans' or 'em')"
            ))),
        }
    }
}

/// State emitted after iteration `iteration` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Sum of squared distances for k-means, data log-likelihood for EM.
    pub objective: f64,
    /// Relative objective change from the previous iteration; absent for iteration 1.
    pub change_rate: Option<f64>,
    pub elapsed_seconds: f64,
    pub labels: Vec<usize>,
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    StoppedEarly,
    Truncated,
}

/// Notable events recorded during a run (reseeds, reinitializations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    pub iteration: usize,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub algorithm: Algorithm,
    pub records: Vec<IterationRecord>,
    pub outcome: Outcome,
    pub events: Vec<RunEvent>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn converged(&self) -> bool {
        self.outcome == Outcome::Converged
    }

    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("a trace has at least one record")
    }

    pub fn final_labels(&self) -> &[usize] {
        &self.last().labels
    }

    pub fn elapsed_seconds(&self) -> f64 {
        self.last().elapsed_seconds
    }

    /// First 1-based iteration `i >= min_iteration` whose change rate is at most `threshold`.
    pub fn first_below(&self, threshold: f64, min_iteration: usize) -> Option<usize> {
        self.records
            .iter()
            .filter(|r| r.iteration >= min_iteration)
            .find(|r| r.change_rate.is_some_and(|h| h <= threshold))
            .map(|r| r.iteration)
    }

    pub fn record(&self, iteration: usize) -> &IterationRecord {
        &self.records[iteration - 1]
    }

    /// Writes `iteration,objective,change_rate,elapsed_seconds` rows.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "iteration,objective,change_rate,elapsed_seconds")?;
        for r in &self.records {
            let h = r.change_rate.map(|h| h.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{}",
                r.iteration, r.objective, h, r.elapsed_seconds
            )?;
        }
        Ok(())
    }

    /// Label snapshots sidecar: one array of labels per iteration.
    pub fn write_labels_json<W: Write>(&self, out: &mut W) -> Result<()> {
        let snapshots: Vec<&[usize]> = self.records.iter().map(|r| r.labels.as_slice()).collect();
        serde_json::to_writer(&mut *out, &LabelSnapshots {
            algorithm: self.algorithm,
            outcome: self.outcome,
            snapshots,
        })?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

#[derive(Serialize)]
struct LabelSnapshots<'a> {
    algorithm: Algorithm,
    outcome: Outcome,
    snapshots: Vec<&'a [usize]>,
}

/// One row of a trace CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub change_rate: Option<f64>,
    pub elapsed_seconds: f64,
}

/// Reads the CSV written by [`IterationTrace::write_csv`].
pub fn read_trace_csv<R: BufRead>(input: R) -> Result<Vec<TraceRow>> {
    let mut rows = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let row = idx + 1;
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
        if cells.len() != 4 {
            return Err(Error::Parse {
                row,
                message: format!("expected 4 fields, found {}", cells.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                row,
                message: format!("'{s}' is not a number"),
            })
        };
        rows.push(TraceRow {
            iteration: cells[0].parse().map_err(|_| Error::Parse {
                row,
                message: format!("'{}' is not an iteration index", cells[0]),
            })?,
            objective: num(cells[1])?,
            change_rate: if cells[2].is_empty() {
                None
            } else {
                Some(num(cells[2])?)
            },
            elapsed_seconds: num(cells[3])?,
        });
    }
    Ok(rows)
}

/// Callback invoked synchronously after every iteration; `Break` ends the run.
pub type Observer<'a> = &'a mut dyn FnMut(&IterationRecord) -> ControlFlow<()>;

/// An observer that never interrupts.
pub fn keep_going(_: &IterationRecord) -> ControlFlow<()> {
    ControlFlow::Continue(())
}

/// Relative change between consecutive objectives as stored in traces.
///
/// A zero previous objective means the run already fit perfectly, so the
/// step is recorded as converged (rate 0).
pub(crate) fn traced_change_rate(prev: f64, curr: f64) -> f64 {
    change_rate(prev, curr).unwrap_or(0.0)
}

/// Shared bookkeeping for the iterative runners.
pub(crate) struct TraceBuilder {
    algorithm: Algorithm,
    stopwatch: Stopwatch,
    records: Vec<IterationRecord>,
    events: Vec<RunEvent>,
}

impl TraceBuilder {
    pub(crate) fn new(algorithm: Algorithm, clock: Clock) -> Self {
        Self {
            algorithm,
            stopwatch: Stopwatch::start(clock),
            records: Vec::new(),
            events: Vec::new(),
        }
    }

    pub(crate) fn event(&mut self, iteration: usize, kind: &str, detail: String) {
        self.events.push(RunEvent {
            iteration,
            kind: kind.to_string(),
            detail,
        });
    }

    /// Appends a record and reports it to `observer`.
    pub(crate) fn push(
        &mut self,
        objective: f64,
        labels: Vec<usize>,
        observer: Observer<'_>,
    ) -> ControlFlow<()> {
        let iteration = self.records.len() + 1;
        let change_rate = self
            .records
            .last()
            .map(|prev| traced_change_rate(prev.objective, objective));
        let record = IterationRecord {
            iteration,
            objective,
            change_rate,
            elapsed_seconds: self.stopwatch.elapsed(iteration),
            labels,
        };
        let flow = observer(&record);
        self.records.push(record);
        flow
    }

    pub(crate) fn len(&self) -> usize {
        self.records.len()
    }

    pub(crate) fn last_labels(&self) -> Option<&[usize]> {
        self.records.last().map(|r| r.labels.as_slice())
    }

    pub(crate) fn finish(self, outcome: Outcome) -> IterationTrace {
        IterationTrace {
            algorithm: self.algorithm,
            records: self.records,
            outcome,
            events: self.events,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(rates: &[Option<f64>]) -> IterationTrace {
        IterationTrace {
            algorithm: Algorithm::KMeans,
            records: rates
                .iter()
                .enumerate()
                .map(|(i, h)| IterationRecord {
                    iteration: i + 1,
                    objective: 10.0 - i as f64,
                    change_rate: *h,
                    elapsed_seconds: i as f64 * 0.5,
                    labels: vec![0, 1],
                })
                .collect(),
            outcome: Outcome::Converged,
            events: vec![],
        }
    }

    #[test]
    fn first_below_respects_minimum() {
        let t = trace(&[None, Some(0.1), Some(0.01), Some(0.001), Some(0.0)]);
        assert_eq!(t.first_below(0.05, 2), Some(3));
        assert_eq!(t.first_below(0.5, 2), Some(2));
        assert_eq!(t.first_below(0.5, 4), Some(4));
        assert_eq!(t.first_below(-1.0, 2), None);
    }

    #[test]
    fn csv_readback() {
        let t = trace(&[None, Some(0.125), Some(0.0)]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("iteration,objective,change_rate,elapsed_seconds\n1,10,,0\n"));
        let rows = read_trace_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].change_rate, Some(0.125));
        assert_eq!(rows[0].change_rate, None);
    }

    #[test]
    fn labels_sidecar_is_json() {
        let t = trace(&[None, Some(0.0)]);
        let mut buf = Vec::new();
        t.write_labels_json(&mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["snapshots"].as_array().unwrap().len(), 2);
        assert_eq!(v["algorithm"], "kmeans");
    }

    #[test]
    fn parse_names() {
        assert_eq!("kmeans".parse::<Algorithm>().unwrap(), Algorithm::KMeans);
        assert_eq!("EM".parse::<Algorithm>().unwrap(), Algorithm::Em);
        assert!("dbscan".parse::<Algorithm>().is_err());
        assert_eq!("iterations".parse::<Clock>().unwrap(), Clock::Iterations);
    }
}
