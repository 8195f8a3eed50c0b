//! Acceptance checks. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use tailcut::accuracy::{pair_counts, pair_counts_naive};
use tailcut::cost::{build_cost_report, computation_cost, cost_effectiveness, CostTimes, PriceTable};
use tailcut::dataset::{generate_synthetic, random_groups, Dataset, GroupSplit, SynthSpec};
use tailcut::earlystop::{
    cross_validate, group_seed, run_groups, run_with_early_stop, AlgorithmConfig, CrossValidation, GroupRun, StopPolicy,
    DEFAULT_MIN_ITERATIONS,
};
use tailcut::em::{run_em, EMConfig};
use tailcut::kmeans::{run_kmeans, KMeansConfig};
use tailcut::regression::{polyfit, threshold_for_accuracy, QuadraticModel};
use tailcut::trace::{keep_going, Algorithm, Clock};

const BENCHMARK_SPEC: &str = include_str!("../data/benchmark.json");
const BENCHMARK_SEED: u64 = 2024;
const SPLIT_SEED: u64 = 7;
const RUN_SEED: u64 = 11;
const GROUP_SIZE: usize = 2000;
const K: usize = 4;

// Frozen from the first run of the long-tail benchmark.
const GOLDEN_MEDIAN_FRACTION_95: f64 = 0.5;
const GOLDEN_MEDIAN_ITERATIONS: usize = 21;

type Criterion = (&'static str, Duration, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

struct Benchmark {
    dataset: Dataset,
    split: GroupSplit,
}

fn benchmark() -> &'static Benchmark {
    static CELL: OnceLock<Benchmark> = OnceLock::new();
    CELL.get_or_init(|| {
        let spec: SynthSpec = serde_json::from_str(BENCHMARK_SPEC).unwrap();
        let dataset = generate_synthetic(&spec, BENCHMARK_SEED).unwrap();
        let split = random_groups(&dataset, GROUP_SIZE, SPLIT_SEED).unwrap();
        Benchmark { dataset, split }
    })
}

fn benchmark_runs() -> Vec<GroupRun> {
    let b = benchmark();
    let all: Vec<usize> = (0..b.split.len()).collect();
    run_groups(&b.dataset, &b.split, &all, Algorithm::KMeans, K, RUN_SEED, Clock::Iterations).unwrap()
}

fn benchmark_cv() -> &'static CrossValidation {
    static CELL: OnceLock<CrossValidation> = OnceLock::new();
    CELL.get_or_init(|| {
        let b = benchmark();
        cross_validate(
            &b.dataset,
            &b.split,
            10,
            Algorithm::KMeans,
            K,
            &[0.90, 0.95, 0.99, 0.999],
            RUN_SEED,
            Clock::Iterations,
        )
        .unwrap()
    })
}

/// `|a - b|` within half a unit in the second significant figure of `b`.
fn two_sig_figs(a: f64, b: f64) -> bool {
    let unit = 10f64.powf(b.abs().log10().floor() - 1.0);
    (a - b).abs() <= 0.5 * unit
}

fn criterion_1() -> Verdict {
    let p1 = [0, 0, 0, 0, 1, 1, 1, 2, 2];
    let p2 = [0, 0, 0, 1, 1, 1, 2, 2, 2];
    let c = pair_counts(&p1, &p2).unwrap();
    let ri = c.rand_index();
    Verdict::new(
        c.n11 == 5 && c.n00 == 22 && c.total() == 36 && ri == 27.0 / 36.0 && ri == 0.75,
        format!("n11={} n00={} rand={ri}", c.n11, c.n00),
    )
}

fn criterion_2() -> Verdict {
    let km = QuadraticModel::from_coefficients(1.83, -3.66, 1.83);
    let expected = [(0.90, 1.83e-2), (0.95, 4.60e-3), (0.99, 1.83e-4), (0.999, 1.83e-6)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (r, h) in expected {
        let t = threshold_for_accuracy(&km, r);
        ok &= two_sig_figs(t, h);
        parts.push(format!("{r}->{t:.3e}"));
    }
    // h = 0.007232 r^2 - 0.01479 r + 0.007558
    let em = QuadraticModel::from_coefficients(0.007558, -0.01479, 0.007232);
    let t = threshold_for_accuracy(&em, 0.90);
    ok &= two_sig_figs(t, 1.05e-4);
    parts.push(format!("em 0.9->{t:.3e}"));
    Verdict::new(ok, parts.join(" "))
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=100);
        let k1 = rng.random_range(1..=10);
        let k2 = rng.random_range(1..=10);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..k1)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..k2)).collect();
        if pair_counts(&a, &b).unwrap() != pair_counts_naive(&a, &b).unwrap() {
            mismatches += 1;
        }
    }
    Verdict::new(mismatches == 0, format!("{mismatches} mismatches in 200 pairs"))
}

fn small_mixture(seed: u64) -> Dataset {
    let mut spec: SynthSpec = serde_json::from_str(BENCHMARK_SPEC).unwrap();
    spec.n_points = 2000;
    generate_synthetic(&spec, seed).unwrap()
}

fn criterion_4() -> Verdict {
    let km_bad = (0..100u64)
        .into_par_iter()
        .filter(|&s| {
            let d = small_mixture(1000 + s);
            let run = run_kmeans(&d, &KMeansConfig::new(K, s), Clock::Iterations, &mut keep_going).unwrap();
            let j: Vec<f64> = run.trace.records.iter().map(|r| r.objective).collect();
            j.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-9))
        })
        .count();
    let em_bad = (0..50u64)
        .into_par_iter()
        .filter(|&s| {
            let d = small_mixture(2000 + s);
            let run = run_em(&d, &EMConfig::new(K, s), Clock::Iterations, &mut keep_going).unwrap();
            let reinit: Vec<usize> = run.trace.events.iter().map(|e| e.iteration).collect();
            run.trace.records.windows(2).any(|w| {
                !reinit.contains(&w[1].iteration) && w[1].objective < w[0].objective - 1e-7 * w[0].objective.abs()
            })
        })
        .count();
    Verdict::new(
        km_bad == 0 && em_bad == 0,
        format!("k-means violations {km_bad}/100, EM violations {em_bad}/50"),
    )
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let beta = [rng.random_range(-2.0..2.0), rng.random_range(-4.0..4.0), rng.random_range(-2.0..2.0)];
        let xs: Vec<f64> = (0..40).map(|_| rng.random_range(0.3..1.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| beta[0] + beta[1] * x + beta[2] * x * x).collect();
        let (c, _) = polyfit(&xs, &ys, 2).unwrap();
        for (a, b) in c.iter().zip(&beta) {
            worst = worst.max((a - b).abs());
        }
    }
    let mut nested_ok = true;
    for _ in 0..20 {
        let xs: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..1.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - x + 0.5 * x * x + rng.random_range(-0.1..0.1)).collect();
        let sse: Vec<f64> = (1..=3).map(|d| polyfit(&xs, &ys, d).unwrap().1.sse).collect();
        nested_ok &= sse[1] <= sse[0] * (1.0 + 1e-10) && sse[2] <= sse[1] * (1.0 + 1e-10);
    }
    Verdict::new(
        worst <= 1e-8 && nested_ok,
        format!("max coefficient error {worst:.2e}, nested SSE dominance {nested_ok}"),
    )
}

fn median<T: Copy + PartialOrd>(v: &mut [T]) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn criterion_6() -> Verdict {
    let runs = benchmark_runs();
    let mut fractions = Vec::new();
    let mut lengths = Vec::new();
    let mut tails = 0;
    for run in &runs {
        let fin = run.trace.final_labels();
        let r: Vec<f64> = run
            .trace
            .records
            .iter()
            .map(|x| pair_counts(&x.labels, fin).unwrap().rand_index())
            .collect();
        let f = r.len();
        let i95 = r.iter().position(|&x| x >= 0.95).unwrap() + 1;
        let i99 = r.iter().position(|&x| x >= 0.99).unwrap() + 1;
        fractions.push(i95 as f64 / f as f64);
        lengths.push(f);
        if f > i99 {
            tails += 1;
        }
    }
    let m95 = median(&mut fractions);
    let mlen = median(&mut lengths);
    let n = runs.len();
    Verdict::new(
        n == 50
            && m95 <= 0.6
            && tails * 5 >= n * 4
            && m95 == GOLDEN_MEDIAN_FRACTION_95
            && mlen == GOLDEN_MEDIAN_ITERATIONS,
        format!("median fraction to r>=0.95 {m95:.3}, runs with a tail after r>=0.99 {tails}/{n}, median iterations {mlen}"),
    )
}

fn criterion_7() -> Verdict {
    let cv = benchmark_cv();
    let mut ok = true;
    let mut parts = Vec::new();
    for s in &cv.pooled.summary {
        if s.target >= 0.999 {
            continue;
        }
        ok &= s.mean_accuracy >= s.target - 0.03 && s.mean_iter_fraction < 1.0;
        if s.target == 0.99 {
            ok &= s.mean_iter_fraction < 0.95;
        }
        parts.push(format!(
            "{}: acc {:.4} iter {:.3}",
            s.target, s.mean_accuracy, s.mean_iter_fraction
        ));
    }
    ok &= cv.pooled.detail.len() == 50 * 4;
    Verdict::new(ok, parts.join(", "))
}

fn criterion_8() -> Verdict {
    let b = benchmark();
    let cv = benchmark_cv();
    let mut checked = 0;
    let mut mismatches = 0;
    for fold in &cv.per_fold {
        for row in &fold.report.detail {
            let data = b.split.group_dataset(&b.dataset, row.group_id).unwrap();
            let config = AlgorithmConfig::new(Algorithm::KMeans, K, group_seed(RUN_SEED, row.group_id));
            let policy = StopPolicy::with_threshold(row.threshold, DEFAULT_MIN_ITERATIONS).unwrap();
            let (report, _) = run_with_early_stop(&data, &config, &policy, Clock::Iterations).unwrap();
            checked += 1;
            if report.stopped_iteration != row.stop_iteration {
                mismatches += 1;
            }
        }
    }
    Verdict::new(
        checked == 200 && mismatches == 0,
        format!("{mismatches} mismatches over {checked} live runs"),
    )
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

fn abs(x: BigRational) -> BigRational {
    if x < BigRational::from_integer(0.into()) {
        -x
    } else {
        x
    }
}

fn within_ulp(computed: f64, exact: &BigRational) -> bool {
    let up = f64::from_bits(computed.to_bits() + 1) - computed;
    abs(rational(computed) - exact) <= rational(up)
}

fn exact_cost(price: f64, seconds: &BigRational) -> BigRational {
    rational(price) * seconds / BigRational::from_integer(3600.into())
}

fn criterion_9() -> Verdict {
    let mut ok = cost_effectiveness(25.0, 100.0).unwrap() == 0.25;
    let table = PriceTable::bundled();
    let names: Vec<&String> = table.entries.keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = 0;
    for _ in 0..50 {
        let name = names[rng.random_range(0..names.len())];
        let full = rng.random_range(1.0..1e6);
        let times = CostTimes {
            train_s: rng.random_range(0.0..1e5),
            actual_s: rng.random_range(0.01..1.0) * full,
            full_s: full,
        };
        let r = build_cost_report(times, &table, name).unwrap();
        let price = r.price_per_hour;
        let comp = rational(times.train_s) + rational(times.actual_s);
        let good = within_ulp(r.dollars_train, &exact_cost(price, &rational(times.train_s)))
            && within_ulp(r.dollars_actual, &exact_cost(price, &rational(times.actual_s)))
            && within_ulp(r.dollars_full, &exact_cost(price, &rational(times.full_s)))
            && within_ulp(r.dollars_comp, &exact_cost(price, &rational(r.time_comp_s)))
            && within_ulp(r.time_comp_s, &comp)
            && r.dollars_saved == r.dollars_full - r.dollars_actual
            && r.cost_effective == times.actual_s / times.full_s;
        if !good {
            failures += 1;
        }
    }
    ok &= failures == 0;

    // Per-image timings scaled to a large batch of images.
    let per_image = CostTimes { train_s: 3600.0, actual_s: 41.3, full_s: 86.6 };
    let images = 150_000.0;
    let r = build_cost_report(per_image.scaled(images), &table, "m5.xlarge").unwrap();
    let saved = rational(r.price_per_hour)
        * (rational(per_image.full_s) * rational(images) - rational(per_image.actual_s) * rational(images))
        / BigRational::from_integer(3600.into());
    let error = abs(rational(r.dollars_saved) - saved);
    ok &= error <= rational(4.0 * f64::EPSILON * r.dollars_full);
    let unit = computation_cost(r.price_per_hour, 3600.0).unwrap() == r.price_per_hour;
    ok &= unit;
    Verdict::new(
        ok,
        format!("{failures} identity failures in 50 reports; batch saving {:.2} {}", r.dollars_saved, r.currency),
    )
}

fn cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_tailcut"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn same_bytes(a: &Path, b: &Path) -> bool {
    matches!((std::fs::read(a), std::fs::read(b)), (Ok(x), Ok(y)) if x == y)
}

fn criterion_10() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let s = |name: &str| p(name).to_string_lossy().into_owned();
    std::fs::write(p("spec.json"), BENCHMARK_SPEC).unwrap();
    let mut ok = cli(&["synth", "--spec", &s("spec.json"), "--seed", "2024", "--out", &s("bench.csv")]);
    for run in ["a", "b"] {
        ok &= cli(&[
            "train", "--data", &s("bench.csv"), "--k", "4", "--group-size", "2000", "--groups", "40",
            "--seed", "11", "--clock", "iterations", "--out", &s(&format!("pred_{run}.json")),
        ]);
        ok &= cli(&[
            "validate", "--data", &s("bench.csv"), "--k", "4", "--group-size", "2000", "--folds", "10",
            "--seed", "11", "--clock", "iterations", "--out", &s(&format!("val_{run}.json")),
        ]);
    }
    let pred = same_bytes(&p("pred_a.json"), &p("pred_b.json"));
    let summary = same_bytes(&p("val_a.json"), &p("val_b.json"));
    let detail = same_bytes(&p("val_a.detail.csv"), &p("val_b.detail.csv"));
    Verdict::new(
        ok && pred && summary && detail,
        format!("commands ok {ok}, predictor identical {pred}, summary identical {summary}, detail identical {detail}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("Rand Index worked example", Duration::from_millis(1), criterion_1),
        ("reference threshold values", Duration::from_millis(1), criterion_2),
        ("contingency vs pairwise Rand Index", Duration::from_secs(1), criterion_3),
        ("objective monotonicity", Duration::from_secs(120), criterion_4),
        ("regression exactness", Duration::from_secs(1), criterion_5),
        ("long-tail property", Duration::from_secs(300), criterion_6),
        ("accuracy targeting under cross-validation", Duration::from_secs(600), criterion_7),
        ("live and offline stop agree", Duration::from_secs(600), criterion_8),
        ("cost arithmetic", Duration::from_secs(1), criterion_9),
        ("deterministic CLI outputs", Duration::from_secs(600), criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let took = start.elapsed();
        let timely = took <= *budget;
        let pass = v.pass && timely;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] criterion {:>2}: {name} ({}; {:.3}s of {:.3}s budget{})",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            took.as_secs_f64(),
            budget.as_secs_f64(),
            if timely { "" } else { ", over budget" },
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
