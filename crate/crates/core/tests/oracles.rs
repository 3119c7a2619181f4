mod common;

use koopdrift::coupling::{distance_correlation, normalized_transfer_entropy, transfer_entropy};
use koopdrift::datasets::{bayes_label, sample_timestep, DriftKind, DriftSpec};
use koopdrift::koopman::{detrend_periodic, fit_koopman, KoopmanOptions, Strategy};
use koopdrift::model::ParamVector;
use koopdrift::trainer::WeightTrajectory;
use proptest::prelude::*;

#[test]
fn analytic_gradient_matches_central_differences() {
    for (draw, rel) in common::gradient_errors(100, 11).into_iter().enumerate() {
        assert!(rel < 1e-5, "draw {draw}: relative gradient error {rel:e}");
    }
}

#[test]
fn edmd_recovers_known_operator() {
    let err = common::edmd_recovery_error();
    assert!(err < 1e-8, "max entry error {err:e}");
}

#[test]
fn detrend_recovers_noiseless_lines() {
    let (fit, trip) = common::detrend_errors();
    assert!(fit < 1e-10, "line recovery error {fit:e}");
    assert!(trip < 1e-10, "retrend round-trip error {trip:e}");
}

#[test]
fn periodic_detrend_ignores_whole_period_oscillation() {
    let start = 0;
    let row: Vec<f64> = (0..300)
        .map(|t| 2.0 - 0.01 * t as f64 + 3.0 * (std::f64::consts::TAU * t as f64 / 100.0).sin())
        .collect();
    let (_, plain) = koopdrift::koopman::detrend(std::slice::from_ref(&row), start).unwrap();
    let (_, joint) = detrend_periodic(&[row], start, 100, 2).unwrap();
    assert!((joint.slopes[0] + 0.01).abs() < 1e-10);
    assert!((joint.intercepts[0] - 2.0).abs() < 1e-8);
    // the plain fit confuses the sine with a slope
    assert!((plain.slopes[0] + 0.01).abs() > 1e-3);
}

#[test]
fn edmd_fit_on_lifted_linear_trajectory_is_exact() {
    // two parameters rotating at the drift frequency lie in the dictionary span
    let cols: Vec<ParamVector> = (0..120)
        .map(|t| {
            let a = std::f64::consts::TAU * t as f64 / 40.0;
            ParamVector::new(vec![a.cos(), a.sin(), 0.5 * a.cos() - 2.0])
        })
        .collect();
    let w = WeightTrajectory {
        start: 0,
        columns: cols.clone(),
        epochs: vec![0; 120],
        accuracies: vec![1.0; 120],
    };
    let model = fit_koopman(&w.window(0, 79).unwrap(), &KoopmanOptions::new(40, Strategy::Fourier)).unwrap();
    assert!(model.fit_residual < 1e-8, "residual {}", model.fit_residual);
    let pred = koopdrift::koopman::predict_weights(&model, 40, koopdrift::koopman::RolloutMode::Autonomous).unwrap();
    // unit-modulus eigenvalues are pulled inside the circle by 1e-6, so the
    // error grows by about that much per step
    for (k, p) in pred.iter().enumerate() {
        let tol = 1e-5 * (k + 1) as f64;
        assert!(p.distance(&cols[80 + k]) < tol, "step {k}: {}", p.distance(&cols[80 + k]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dcor_is_symmetric_and_bounded(x in prop::collection::vec(-100.0..100.0f64, 4..60), seed in any::<u64>()) {
        let y = common::series(seed, x.len());
        let a = distance_correlation(&x, &y).unwrap();
        let b = distance_correlation(&y, &x).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn dcor_of_affine_map_is_one(x in prop::collection::vec(-10.0..10.0f64, 4..60), a in 0.1..5.0f64, neg in any::<bool>(), b in -5.0..5.0f64) {
        prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-3));
        let a = if neg { -a } else { a };
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        prop_assert!((distance_correlation(&x, &x).unwrap() - 1.0).abs() < 1e-10);
        prop_assert!((distance_correlation(&x, &y).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn te_is_nonnegative_and_normalized_at_most_one(seed in any::<u64>(), bins in 2usize..10) {
        let x = common::series(seed, 80);
        let y = common::series(seed ^ 0xabcdef, 80);
        prop_assert!(transfer_entropy(&x, &y, bins).unwrap() >= 0.0);
        let n = normalized_transfer_entropy(&x, &y, bins).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
    }
}

#[test]
fn dcor_independence_below_permutation_null() {
    let (d, q) = common::dcor_independence();
    assert!(d < q, "dCor {d} vs null 95th percentile {q}");
    let rate = common::dcor_independence_rate(20);
    assert!(rate >= 0.9, "only {rate} of trials below the null 95th percentile");
}

#[test]
fn te_independence_below_permutation_null() {
    let (te, q) = common::te_independence();
    assert!(te < q, "TE {te} vs null 95th percentile {q}");
}

#[test]
fn te_on_lag_one_copy_is_maximal_and_asymmetric() {
    let c = common::te_copy_process();
    let log8 = 8f64.ln();
    assert!((c.forward - log8).abs() < 0.01, "TE(x->y) = {}, log 8 = {log8}", c.forward);
    assert!(c.backward < 0.01, "TE(y->x) = {}", c.backward);
    assert!((c.normalized - 1.0).abs() < 1e-3);
    assert_eq!(c.strongest, (0, 1));
}

#[test]
fn oscillating_separation_bayes_error_near_five_percent() {
    let spec = DriftSpec::new(DriftKind::OscillatingSeparation);
    let t = spec.period / 2;
    assert!((spec.separation(t).unwrap() - 0.4).abs() < 1e-12);
    let batch = sample_timestep(&spec, t, 200_000, 4).unwrap();
    let wrong = batch
        .inputs
        .iter()
        .zip(&batch.labels)
        .filter(|(x, &y)| bayes_label(&spec, t, **x).unwrap() != y)
        .count();
    let err = wrong as f64 / batch.len() as f64;
    // Phi(-0.2 / 0.12) = 0.0478
    assert!((err - 0.0478).abs() < 0.004, "Bayes error {err}");
}
