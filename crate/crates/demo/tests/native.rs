use flock_demo::{energy_samples, orbit, prediction, MAX_DEMO_AGENTS};

#[test]
fn prediction_json_has_table_period() {
    let v: serde_json::Value = serde_json::from_str(&prediction(-2.0, -2.0, 0.0, 400).unwrap()).unwrap();
    assert!((v["period"].as_f64().unwrap() - 2262.74).abs() < 0.01);
    let v: serde_json::Value = serde_json::from_str(&prediction(-2.0, -2.0, -0.5, 400).unwrap()).unwrap();
    assert_eq!(v["I_E"], "inf");
    assert!(prediction(1.0, -2.0, 0.0, 400).is_err());
}

#[test]
fn orbit_shows_the_first_trough() {
    let o = orbit(-2.0, -2.0, 0.0, 100, true).unwrap();
    assert_eq!(o.values().len(), 1025);
    let a1 = o.amplitudes()[0];
    // −N/c_+ up to the finite-N error
    assert!((a1 + 100.0 / (1.0 + 2f64.sqrt())).abs() < 0.1 * 41.4, "{a1}");
    assert!(orbit(-2.0, -2.0, 0.0, MAX_DEMO_AGENTS + 1, true).is_err());
}

#[test]
fn energy_curve_is_minimal_at_the_asymmetric_end() {
    let e = energy_samples(-2.0, -2.0, 51).unwrap();
    assert!(e[0].is_infinite());
    assert!((e[50] - 0.1767766952966369).abs() < 1e-12);
    assert!(e[1..].windows(2).all(|w| w[1] <= w[0]));
}
