use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use tailcut::regression::{compare_models, fit_quadratic, horner, polyfit, threshold_for_accuracy, TrainingPairs};

fn least_squares(xs: &[f64], ys: &[f64], degree: usize) -> Vec<f64> {
    let a = DMatrix::from_fn(xs.len(), degree + 1, |i, j| xs[i].powi(j as i32));
    let b = DVector::from_column_slice(ys);
    a.svd(true, true).solve(&b, 1e-14).unwrap().iter().copied().collect()
}

fn sample_xy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (8usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0..1.0f64, n),
            prop::collection::vec(-1.0..1.0f64, n),
        )
    })
}

proptest! {
    #[test]
    fn agrees_with_svd_least_squares((xs, ys) in sample_xy(), degree in 1usize..=3) {
        let (c, _) = polyfit(&xs, &ys, degree).unwrap();
        let reference = least_squares(&xs, &ys, degree);
        let fitted: Vec<f64> = xs.iter().map(|&x| horner(&c, x)).collect();
        let expected: Vec<f64> = xs.iter().map(|&x| horner(&reference, x)).collect();
        for (a, b) in fitted.iter().zip(&expected) {
            prop_assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_the_design((xs, ys) in sample_xy(), degree in 1usize..=3) {
        let (c, diag) = polyfit(&xs, &ys, degree).unwrap();
        let scale = ys.iter().map(|y| y.abs()).sum::<f64>() + 1.0;
        for j in 0..=degree {
            let dot: f64 = xs.iter().zip(&ys).map(|(&x, &y)| (y - horner(&c, x)) * x.powi(j as i32)).sum();
            prop_assert!(dot.abs() < 1e-8 * scale, "column {j}: {dot}");
        }
        prop_assert!(diag.r_squared <= 1.0 + 1e-12);
        prop_assert!(diag.adjusted_r_squared <= diag.r_squared + 1e-12);
    }

    #[test]
    fn nested_models_never_fit_worse((xs, ys) in sample_xy()) {
        let sse: Vec<f64> = (1..=3).map(|d| polyfit(&xs, &ys, d).unwrap().1.sse).collect();
        prop_assert!(sse[1] <= sse[0] * (1.0 + 1e-9) + 1e-15);
        prop_assert!(sse[2] <= sse[1] * (1.0 + 1e-9) + 1e-15);
    }

    #[test]
    fn thresholds_are_never_negative(b0 in -1.0..1.0f64, b1 in -2.0..2.0f64, b2 in -1.0..1.0f64, r in 0.0..1.0f64) {
        let m = tailcut::regression::QuadraticModel::from_coefficients(b0, b1, b2);
        prop_assert!(threshold_for_accuracy(&m, r) >= 0.0);
    }
}

#[test]
fn recovers_noiseless_quadratic() {
    let pairs = TrainingPairs::from_points((0..50).map(|i| {
        let r = 0.5 + i as f64 / 100.0;
        (r, 1.83 - 3.66 * r + 1.83 * r * r)
    }));
    let m = fit_quadratic(&pairs).unwrap();
    assert!((m.beta0 - 1.83).abs() < 1e-8);
    assert!((m.beta1 + 3.66).abs() < 1e-8);
    assert!((m.beta2 - 1.83).abs() < 1e-8);
    assert!(m.diagnostics.sse < 1e-20);
}

#[test]
fn too_few_distinct_points_is_rank_deficient() {
    let e = polyfit(&[0.5, 0.5, 0.7], &[1.0, 1.1, 2.0], 2).unwrap_err();
    assert_eq!(e.exit_code(), 4);
}

#[test]
fn comparison_prefers_the_generating_degree() {
    let pairs = TrainingPairs::from_points((0..40).map(|i| {
        let r = i as f64 / 40.0;
        let noise = if i % 2 == 0 { 1e-3 } else { -1e-3 };
        (r, 0.2 - 0.5 * r + 0.4 * r * r + noise)
    }));
    let cmp = compare_models(&pairs).unwrap();
    assert_eq!(cmp.ranked.len(), 3);
    assert!(cmp.ranked[0].degree >= 2);
    assert!(cmp.ranked.windows(2).all(|w| {
        w[0].diagnostics.adjusted_r_squared >= w[1].diagnostics.adjusted_r_squared - 1e-12
    }));
}
