//! End-to-end runs through the harness from JSON configs.

use maxiset::harness::{power_curve, run_monte_carlo, write_csv, ExperimentConfig};
use maxiset::minimax::{least_favorable, minimax_test, solve_design};
use maxiset::model::sample_sequence_model;
use maxiset::quadratic::{predicted_type2, QuadraticCoefficients};

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).unwrap()
}

#[test]
fn same_seed_same_rows() {
    let text = r#"{
        "test": {"family": "kernel", "bandwidth": 0.05, "len": 512},
        "alternative": {"kind": "power-law", "amplitude": 0.1, "decay": 1.5, "len": 64},
        "n": 500, "reps": 400, "seed": 11
    }"#;
    let a = run_monte_carlo(&config(text)).unwrap();
    let b = run_monte_carlo(&config(text)).unwrap();
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    write_csv(&mut ca, &[a], "h").unwrap();
    write_csv(&mut cb, &[b], "h").unwrap();
    assert_eq!(ca, cb);
    assert!(String::from_utf8(ca).unwrap().starts_with("# schema=v1\n"));
}

#[test]
fn power_curve_tracks_prediction() {
    let text = r#"{
        "test": {"family": "quadratic", "coefficients": {"kind": "plateau", "l": 30, "len": 60}},
        "alternative": {"kind": "power-law", "amplitude": 1.0, "decay": 1.0, "len": 60},
        "target_drift": 1.0,
        "scales": [0.0, 1.0, 2.0, 3.0],
        "n": 1000, "reps": 4000, "seed": 5
    }"#;
    let points = power_curve(&config(text)).unwrap();
    assert_eq!(points.len(), 4);
    // the prediction ignores the extra variance under the alternative, so it
    // is only checked at moderate drift
    for p in points.iter().filter(|p| p.scale <= 1.0) {
        let beta = p.predicted_type2.unwrap();
        // null row: power is the level
        let expected = if p.scale == 0.0 { 0.05 } else { 1.0 - beta };
        assert!((p.power - expected).abs() < 5.0 * p.std_err.max(0.004) + 0.03, "{p:?}");
    }
    assert!(points.windows(2).all(|w| w[1].power >= w[0].power - 0.02));
}

#[test]
fn minimax_test_is_quadratic_test_with_design_weights() {
    let design = solve_design(1.0, 1.0, 1e-3, 2000, 1.0, None, 1e-10).unwrap();
    let theta = least_favorable(&design);
    let coeffs = QuadraticCoefficients::new(design.kappa_j2.clone(), 2000, 1.0).unwrap();
    let beta_q = predicted_type2(&theta, &coeffs, 0.05).unwrap();
    let beta_m = design.predicted_type2(0.05).unwrap();
    assert!((beta_q - beta_m).abs() < 1e-3, "{beta_q} vs {beta_m}");
    let obs = sample_sequence_model(&theta, 2000, 1.0, 1).unwrap();
    let report = minimax_test(&obs, &design, 0.05).unwrap();
    assert!(report.statistic.is_finite());
}
