//! Change-rate versus accuracy regression.
//!
//! Pairs `(r_i, h_i)` come from converged training runs: `r_i` is the Rand
//! Index of iteration `i`'s partition against the run's final partition and
//! `h_i` the relative objective change into iteration `i`. A quadratic
//! `h = beta0 + beta1 r + beta2 r^2` fitted by ordinary least squares turns a
//! target accuracy into a change-rate stop threshold.

use serde::{Deserialize, Serialize};

use crate::accuracy::{pair_counts, Partition};
use crate::error::{Error, Result};
use crate::trace::IterationTrace;

/// `|curr - prev| / |prev|`.
pub fn change_rate(prev: f64, curr: f64) -> Result<f64> {
    if prev == 0.0 {
        return Err(Error::SingularObjective);
    }
    Ok((curr - prev).abs() / prev.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    /// Accuracy against the final partition.
    pub r: f64,
    /// Objective change rate at the same iteration.
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSource {
    pub group: usize,
    pub iteration: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingPairs {
    pub pairs: Vec<TrainingPair>,
    pub provenance: Vec<PairSource>,
}

impl TrainingPairs {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn extend(&mut self, other: TrainingPairs) {
        self.pairs.extend(other.pairs);
        self.provenance.extend(other.provenance);
    }

    /// Builds pairs without provenance.
    pub fn from_points(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let pairs: Vec<TrainingPair> = points.into_iter().map(|(r, h)| TrainingPair { r, h }).collect();
        let provenance = (0..pairs.len())
            .map(|i| PairSource {
                group: 0,
                iteration: i + 2,
            })
            .collect();
        Self { pairs, provenance }
    }

    fn rs(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.r).collect()
    }

    fn hs(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.h).collect()
    }
}

/// One pair per iteration `2..=f` of a converged trace.
pub fn collect_pairs(
    trace: &IterationTrace,
    reference: &Partition,
    group: usize,
) -> Result<TrainingPairs> {
    if !trace.converged() {
        return Err(Error::arg(format!(
            "trace for group {group} did not converge ({:?})",
            trace.outcome
        )));
    }
    let mut out = TrainingPairs::default();
    for rec in trace.records.iter().skip(1) {
        let r = pair_counts(&rec.labels, reference.labels())?.rand_index();
        let h = rec
            .change_rate
            .ok_or_else(|| Error::Numeric(format!("iteration {} has no change rate", rec.iteration)))?;
        out.pairs.push(TrainingPair { r, h });
        out.provenance.push(PairSource {
            group,
            iteration: rec.iteration,
        });
    }
    Ok(out)
}

/// Goodness-of-fit statistics for a least-squares polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub sse: f64,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
    pub rmse: f64,
    pub n_points: usize,
}

impl FitDiagnostics {
    fn compute(xs: &[f64], ys: &[f64], coeffs: &[f64]) -> Self {
        let n = xs.len();
        let sse: f64 = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let e = y - horner(coeffs, x);
                e * e
            })
            .sum();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let sst: f64 = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
        let r_squared = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
        let degree = coeffs.len() - 1;
        let dof = n as f64 - degree as f64 - 1.0;
        let adjusted_r_squared = if dof > 0.0 {
            1.0 - (1.0 - r_squared) * (n as f64 - 1.0) / dof
        } else {
            r_squared
        };
        Self {
            sse,
            r_squared,
            adjusted_r_squared,
            rmse: (sse / n as f64).sqrt(),
            n_points: n,
        }
    }
}

/// Evaluates `c[0] + c[1] x + c[2] x^2 + ...` in Horner form.
pub fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Least-squares polynomial of `degree` through `(xs, ys)`, ascending coefficients.
///
/// Solves the normal equations by Gaussian elimination with partial pivoting.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Result<(Vec<f64>, FitDiagnostics)> {
    if xs.len() != ys.len() {
        return Err(Error::arg("x and y lengths differ"));
    }
    let m = degree + 1;
    let mut distinct = xs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < m {
        return Err(Error::RankDeficient { degree });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite training pair".into()));
    }

    // power sums S_j = sum x^j for j in 0..2m-1, moments T_j = sum y x^j
    let mut s = vec![0.0; 2 * m - 1];
    let mut t = vec![0.0; m];
    for (&x, &y) in xs.iter().zip(ys) {
        let mut p = 1.0;
        for (j, sj) in s.iter_mut().enumerate() {
            *sj += p;
            if j < m {
                t[j] += y * p;
            }
            p *= x;
        }
    }
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row: Vec<f64> = (0..m).map(|j| s[i + j]).collect();
            row.push(t[i]);
            row
        })
        .collect();
    let coeffs = solve_augmented(&mut a).ok_or(Error::RankDeficient { degree })?;
    let diag = FitDiagnostics::compute(xs, ys, &coeffs);
    Ok((coeffs, diag))
}

/// Solves an `m x (m+1)` augmented system in place.
fn solve_augmented(a: &mut [Vec<f64>]) -> Option<Vec<f64>> {
    let m = a.len();
    let scale = a
        .iter()
        .flat_map(|r| r[..m].iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= scale * 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for row in rest {
            let f = row[col] / pivot_row[col];
            if f != 0.0 {
                for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let mut acc = a[i][m];
        for j in i + 1..m {
            acc -= a[i][j] * x[j];
        }
        x[i] = acc / a[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModel {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub diagnostics: FitDiagnostics,
}

impl QuadraticModel {
    pub fn coefficients(&self) -> [f64; 3] {
        [self.beta0, self.beta1, self.beta2]
    }

    /// Model with the given coefficients and empty diagnostics.
    pub fn from_coefficients(beta0: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            beta0,
            beta1,
            beta2,
            diagnostics: FitDiagnostics {
                sse: 0.0,
                r_squared: 1.0,
                adjusted_r_squared: 1.0,
                rmse: 0.0,
                n_points: 0,
            },
        }
    }
}

/// Fits `h = beta0 + beta1 r + beta2 r^2` over all pairs with equal weight.
pub fn fit_quadratic(pairs: &TrainingPairs) -> Result<QuadraticModel> {
    let (c, diagnostics) = polyfit(&pairs.rs(), &pairs.hs(), 2)?;
    Ok(QuadraticModel {
        beta0: c[0],
        beta1: c[1],
        beta2: c[2],
        diagnostics,
    })
}

/// Stop threshold for `target_r`; negative model values clamp to 0, meaning
/// "run to full convergence".
pub fn threshold_for_accuracy(model: &QuadraticModel, target_r: f64) -> f64 {
    horner(&model.coefficients(), target_r).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeFit {
    pub degree: usize,
    pub coefficients: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    /// Best first.
    pub ranked: Vec<DegreeFit>,
    /// Degrees that could not be fitted, with the reason.
    pub omitted: Vec<(usize, String)>,
}

/// Adjusted R² values closer than this count as a tie, broken toward the lower degree.
pub const ADJ_R2_TIE: f64 = 1e-12;

/// Fits degrees 1, 2 and 3 and ranks them by adjusted R².
pub fn compare_models(pairs: &TrainingPairs) -> Result<ModelComparison> {
    let (rs, hs) = (pairs.rs(), pairs.hs());
    let mut ranked = Vec::new();
    let mut omitted = Vec::new();
    for degree in 1..=3 {
        match polyfit(&rs, &hs, degree) {
            Ok((coefficients, diagnostics)) => ranked.push(DegreeFit {
                degree,
                coefficients,
                diagnostics,
            }),
            Err(e) => omitted.push((degree, e.to_string())),
        }
    }
    if ranked.is_empty() {
        return Err(Error::RankDeficient { degree: 1 });
    }
    ranked.sort_by(|a, b| {
        let (x, y) = (a.diagnostics.adjusted_r_squared, b.diagnostics.adjusted_r_squared);
        if (x - y).abs() <= ADJ_R2_TIE {
            a.degree.cmp(&b.degree)
        } else {
            y.total_cmp(&x)
        }
    });
    Ok(ModelComparison { ranked, omitted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Algorithm, IterationRecord, Outcome};

    fn planted(coeffs: &[f64], n: usize) -> TrainingPairs {
        TrainingPairs::from_points((0..n).map(|i| {
            let r = 0.5 + 0.5 * i as f64 / (n - 1) as f64;
            (r, horner(coeffs, r))
        }))
    }

    #[test]
    fn change_rate_examples() {
        assert!((change_rate(100.0, 90.0).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(change_rate(7.5, 7.5).unwrap(), 0.0);
        assert!((change_rate(-1000.0, -999.0).unwrap() - 0.001).abs() < 1e-15);
        assert!(matches!(change_rate(0.0, 1.0), Err(Error::SingularObjective)));
    }

    #[test]
    fn recovers_planted_quadratic() {
        let m = fit_quadratic(&planted(&[2.0, -4.0, 2.0], 25)).unwrap();
        assert!((m.beta0 - 2.0).abs() < 1e-8);
        assert!((m.beta1 + 4.0).abs() < 1e-8);
        assert!((m.beta2 - 2.0).abs() < 1e-8);
    }

    #[test]
    fn constant_response() {
        let m = fit_quadratic(&planted(&[0.3], 10)).unwrap();
        assert!((m.beta0 - 0.3).abs() < 1e-8);
        assert!(m.beta1.abs() < 1e-8);
        assert!(m.beta2.abs() < 1e-8);
    }

    #[test]
    fn too_few_distinct_r() {
        let p = TrainingPairs::from_points([(0.5, 1.0), (0.5, 2.0), (0.9, 0.1), (0.9, 0.2)]);
        assert!(matches!(fit_quadratic(&p), Err(Error::RankDeficient { degree: 2 })));
    }

    #[test]
    fn clamps_negative_threshold() {
        let zero = QuadraticModel::from_coefficients(0.0, 0.0, 0.0);
        assert_eq!(threshold_for_accuracy(&zero, 0.9), 0.0);
        let dips = QuadraticModel::from_coefficients(0.1, -0.2, 0.0);
        assert_eq!(threshold_for_accuracy(&dips, 0.99), 0.0);
    }

    #[test]
    fn parsimony_on_exact_quadratic() {
        let cmp = compare_models(&planted(&[2.0, -4.0, 2.0], 30)).unwrap();
        assert_eq!(cmp.ranked[0].degree, 2);
        let sse = |d: usize| cmp.ranked.iter().find(|f| f.degree == d).unwrap().diagnostics.sse;
        assert!(sse(2) < 1e-20 && sse(3) < 1e-20);
    }

    #[test]
    fn nested_line() {
        let cmp = compare_models(&planted(&[0.4, -0.3], 30)).unwrap();
        let sse = |d: usize| cmp.ranked.iter().find(|f| f.degree == d).unwrap().diagnostics.sse;
        assert!((sse(1) - sse(2)).abs() < 1e-10);
        assert_eq!(cmp.ranked[0].degree, 1);
    }

    #[test]
    fn cubic_omitted_with_three_distinct() {
        let p = TrainingPairs::from_points([(0.5, 1.0), (0.7, 0.5), (0.9, 0.1), (0.9, 0.12)]);
        let cmp = compare_models(&p).unwrap();
        assert_eq!(cmp.omitted.len(), 1);
        assert_eq!(cmp.omitted[0].0, 3);
    }

    #[test]
    fn diagnostics_consistent() {
        let p = TrainingPairs::from_points([(0.1, 0.9), (0.3, 0.5), (0.5, 0.3), (0.7, 0.05), (0.9, 0.02), (1.0, 0.0)]);
        let m = fit_quadratic(&p).unwrap();
        let d = m.diagnostics;
        assert_eq!(d.n_points, 6);
        assert!((d.rmse - (d.sse / 6.0).sqrt()).abs() < 1e-15);
        assert!(d.r_squared <= 1.0 && d.adjusted_r_squared <= d.r_squared);
    }

    fn record(iteration: usize, objective: f64, change_rate: Option<f64>, labels: Vec<usize>) -> IterationRecord {
        IterationRecord {
            iteration,
            objective,
            change_rate,
            elapsed_seconds: iteration as f64,
            labels,
        }
    }

    #[test]
    fn pairs_from_trace() {
        let trace = IterationTrace {
            algorithm: Algorithm::KMeans,
            records: vec![
                record(1, 10.0, None, vec![0, 0, 1, 1]),
                record(2, 8.0, Some(0.2), vec![0, 1, 1, 1]),
                record(3, 6.0, Some(0.25), vec![0, 0, 0, 1]),
                record(4, 6.0, Some(0.0), vec![0, 0, 0, 1]),
            ],
            outcome: Outcome::Converged,
            events: vec![],
        };
        let reference = Partition::new(trace.final_labels().to_vec());
        let p = collect_pairs(&trace, &reference, 7).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.pairs.last().unwrap().r, 1.0);
        assert_eq!(p.pairs[0].h, 0.2);
        assert_eq!(p.provenance[0], PairSource { group: 7, iteration: 2 });

        let mut open = trace.clone();
        open.outcome = Outcome::Truncated;
        assert!(collect_pairs(&open, &reference, 7).is_err());
    }
}
