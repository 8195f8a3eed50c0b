use proptest::prelude::*;
use tailcut::dataset::{generate_synthetic, random_groups, Dataset, GroupSplit, SynthSpec};
use tailcut::earlystop::{
    cross_validate, group_seed, run_groups, run_with_early_stop, train_from_runs, train_predictor, AlgorithmConfig,
    StopPolicy, TrainedPredictor,
};
use tailcut::trace::{read_trace_csv, Algorithm, Clock, Outcome};
use tailcut::Error;

fn bench(n: usize, seed: u64) -> Dataset {
    let spec: SynthSpec = serde_json::from_str(include_str!("../data/benchmark.json")).unwrap();
    generate_synthetic(&SynthSpec { n_points: n, ..spec }, seed).unwrap()
}

fn small() -> (Dataset, GroupSplit) {
    let d = bench(6000, 1);
    let split = random_groups(&d, 500, 2).unwrap();
    (d, split)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn live_stop_equals_offline_scan(threshold in 0.0..0.05f64, min_it in 2usize..6, g in 0usize..12, alg in prop_oneof![Just(Algorithm::KMeans), Just(Algorithm::Em)]) {
        let (d, split) = small();
        let data = split.group_dataset(&d, g).unwrap();
        let config = AlgorithmConfig::new(alg, 3, group_seed(5, g));
        let full = config.run(&data, Clock::Iterations, &mut tailcut::trace::keep_going).unwrap();
        let policy = StopPolicy::with_threshold(threshold, min_it).unwrap();
        let (report, trace) = run_with_early_stop(&data, &config, &policy, Clock::Iterations).unwrap();
        prop_assert_eq!(report.stopped_iteration, policy.offline_stop(&full));
        prop_assert_eq!(&trace.records[..], &full.records[..trace.len()]);
        prop_assert!(report.stopped_iteration >= min_it.min(full.len()));
    }
}

#[test]
fn pooled_summary_is_the_group_weighted_fold_average() {
    let (d, split) = small();
    let targets = [0.9, 0.99];
    let cv = cross_validate(&d, &split, 5, Algorithm::KMeans, 3, &targets, 9, Clock::Iterations).unwrap();
    for (t, pooled) in cv.pooled.summary.iter().enumerate() {
        let mut weighted = 0.0;
        let mut groups = 0;
        for f in &cv.per_fold {
            let s = &f.report.summary[t];
            weighted += s.mean_accuracy * s.groups as f64;
            groups += s.groups;
        }
        assert_eq!(groups, split.len());
        assert!((pooled.mean_accuracy - weighted / groups as f64).abs() < 1e-12);
    }
    let mut csv = Vec::new();
    cv.write_detail_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "group_id,target,stop_iteration,achieved_accuracy,iter_fraction,time_fraction"
    );
    for (t, pooled) in cv.pooled.summary.iter().enumerate() {
        let acc: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|c| c[1].parse::<f64>().unwrap() == targets[t])
            .map(|c| c[3].parse().unwrap())
            .collect();
        let mean = acc.iter().sum::<f64>() / acc.len() as f64;
        assert!((mean - pooled.mean_accuracy).abs() < 1e-12);
    }
}

#[test]
fn training_is_reproducible_and_round_trips() {
    let (d, split) = small();
    let groups: Vec<usize> = (0..6).collect();
    let a = train_predictor(&d, &split, &groups, Algorithm::KMeans, 3, 4, Clock::Iterations).unwrap();
    let b = train_predictor(&d, &split, &groups, Algorithm::KMeans, 3, 4, Clock::Iterations).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let back = TrainedPredictor::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back.model, a.model);
    assert_eq!(back.created_from, groups);
    assert!(a.threshold(1.0) >= 0.0);
}

#[test]
fn k_larger_than_group_is_rejected_before_running() {
    let (d, split) = small();
    let e = train_predictor(&d, &split, &[0], Algorithm::KMeans, 501, 0, Clock::Iterations).unwrap_err();
    assert!(matches!(e, Error::Argument(_)));
}

#[test]
fn unconverged_training_groups_are_reported() {
    let (d, split) = small();
    let mut runs = run_groups(&d, &split, &[0, 1, 2], Algorithm::KMeans, 3, 0, Clock::Iterations).unwrap();
    runs[1].trace.outcome = Outcome::Truncated;
    match train_from_runs(&runs, Algorithm::KMeans, 3, "d") {
        Err(Error::Training { groups, .. }) => assert_eq!(groups, vec![runs[1].group]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn target_one_runs_to_convergence() {
    let (d, split) = small();
    let data = split.group_dataset(&d, 0).unwrap();
    let model = tailcut::QuadraticModel::from_coefficients(1.83, -3.66, 1.83);
    let policy = StopPolicy::new(&model, 1.0, 2).unwrap();
    assert_eq!(policy.threshold, 0.0);
    let config = AlgorithmConfig::new(Algorithm::KMeans, 3, 8);
    let (report, trace) = run_with_early_stop(&data, &config, &policy, Clock::Iterations).unwrap();
    assert_eq!(report.outcome, Outcome::Converged);
    assert!(!report.converged_early);
    assert_eq!(report.stopped_iteration, trace.len());
    let mut csv = Vec::new();
    trace.write_csv(&mut csv).unwrap();
    let rows = read_trace_csv(&csv[..]).unwrap();
    assert_eq!(rows.len(), trace.len());
    assert!(rows[0].change_rate.is_none());
    assert_eq!(rows.last().unwrap().objective, trace.last().objective);
}

#[test]
fn rejects_bad_targets() {
    let model = tailcut::QuadraticModel::from_coefficients(1.0, -2.0, 1.0);
    for t in [0.0, -0.5, 1.5, f64::NAN] {
        assert!(StopPolicy::new(&model, t, 2).is_err());
    }
}
