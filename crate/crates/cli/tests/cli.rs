use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn flock(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flock"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TABLE_ASYM: &str = "[model]\ng_x = -2.0\ng_v = -2.0\nrho_v1 = 0.0\nn = 400\n";

#[test]
fn predict_reports_table_values_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", TABLE_ASYM);
    let out = flock(&["predict", "--config", s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    assert!((v["period"].as_f64().unwrap() - 2262.74).abs() < 0.01);
    assert!((v["c_plus"].as_f64().unwrap() - (1.0 + 2f64.sqrt())).abs() < 1e-12);
    assert!((v["I_E"].as_f64().unwrap() - 0.176776695296637).abs() < 1e-12);
    assert!((v["time_scale"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(v["classification"]["kind"], "attenuating_traveling_wave");
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        &keys[..10],
        ["c_plus", "c_minus", "u", "T_cross", "A", "period", "attenuation", "I_E", "classification", "time_scale"]
    );
    let again = serde_json::to_string_pretty(&v).unwrap() + "\n";
    assert_eq!(again, text);
}

#[test]
fn predict_marginal_case_has_infinite_energy_index() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", "[model]\ng_x = -2.0\ng_v = -2.0\nrho_v1 = -0.5\n");
    let out = flock(&["predict", "--config", s(&cfg)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["I_E"], "inf");
    assert_eq!(v["attenuation"].as_f64(), Some(1.0));
    assert_eq!(serde_json::to_string_pretty(&v).unwrap() + "\n", text);
}

#[test]
fn predict_names_the_violated_condition() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[model]\nrho_x = [-0.6, 1.0, -0.4]\n");
    let out = flock(&["predict", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ρ_{x,-1}=ρ_{x,1}"));
}

#[test]
fn unknown_keys_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[model]\ngx = -1.0\n");
    assert_eq!(flock(&["predict", "--config", s(&cfg)]).status.code(), Some(2));
    let cfg = write(dir.path(), "bad2.toml", "[model]\nrho_x = [-0.5, 1.0, -0.4]\n");
    assert_eq!(flock(&["simulate", "--config", s(&cfg)]).status.code(), Some(2));
}

fn orbit(text: &str) -> Vec<(f64, f64)> {
    text.lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let (t, y) = l.split_once(',').unwrap();
            (t.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

#[test]
fn simulate_table_run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", TABLE_ASYM);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let out = flock(&["simulate", "--config", s(&cfg), "--out", s(p)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("t,y\n"));
    let y = orbit(&text);
    assert_eq!(y.len(), 4097);
    let min = y.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    assert!((min + 166.0).abs() < 0.03 * 166.0, "min {min}");

    // the written orbit feeds straight back into metrics
    let out = flock(&["metrics", s(&a)]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["period"].as_f64().unwrap() - 2262.7).abs() < 0.02 * 2262.7);
}

#[test]
fn simulate_at_rest_stays_at_rest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "z.toml", "[model]\nn = 30\n[leader]\nkind = \"ramp\"\nv0 = 0.0\n");
    let out = flock(&["simulate", "--config", s(&cfg)]);
    assert!(out.status.success());
    let y = orbit(&String::from_utf8(out.stdout).unwrap());
    assert!(!y.is_empty() && y.iter().all(|p| p.1 == 0.0));
}

#[test]
fn simulate_full_trace_writes_agent_positions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "t.toml",
        "[model]\nn = 10\n[run]\nt_end = 50.0\ntrace_stride = 512\n",
    );
    let out_path = dir.path().join("orbit.csv");
    let out = flock(&["simulate", "--config", s(&cfg), "--out", s(&out_path), "--full-trace"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("orbit.trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("t,agent_index,position_rel_leader"));
    // 4096 intervals / 512 + 1 snapshots, 10 agents each
    assert_eq!(lines.count(), 9 * 10);
    assert_eq!(flock(&["simulate", "--config", s(&cfg), "--full-trace"]).status.code(), Some(2));
}

#[test]
fn integration_failure_leaves_partial_csv_with_footer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "f.toml", "[model]\nn = 20\n[integrator]\nmax_steps = 50\n");
    let out_path = dir.path().join("o.csv");
    let out = flock(&["simulate", "--config", s(&cfg), "--out", s(&out_path)]);
    assert_eq!(out.status.code(), Some(3));
    let text = fs::read_to_string(&out_path).unwrap();
    assert!(text.starts_with("t,y\n"));
    assert!(text.lines().last().unwrap().starts_with("# status: integration_failure"));
}

#[test]
fn metrics_on_sine() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("t,y\n");
    for i in 0..=20_000 {
        let t = i as f64 * 1e-3;
        text.push_str(&format!("{t},{}\n", t.sin()));
    }
    let csv = write(dir.path(), "sine.csv", &text);
    let out = flock(&["metrics", s(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let crossings = v["T_cross"].as_array().unwrap();
    assert_eq!(crossings.len(), 6);
    for (k, c) in crossings.iter().enumerate() {
        let expected = (k + 1) as f64 * std::f64::consts::PI;
        assert!((c.as_f64().unwrap() - expected).abs() < 1e-4);
    }
    assert!((v["period"].as_f64().unwrap() - 2.0 * std::f64::consts::PI).abs() < 1e-4);
}

#[test]
fn metrics_without_features_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let text: String = std::iter::once("t,y\n".to_string())
        .chain((0..100).map(|i| format!("{},{}\n", i as f64 * 0.1, i as f64)))
        .collect();
    let csv = write(dir.path(), "ramp.csv", &text);
    let out = flock(&["metrics", s(&csv)]);
    assert_eq!(out.status.code(), Some(4));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["complete"], false);
}

#[test]
fn wavecheck_velocities_within_three_percent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "w.toml", "[model]\ng_x = -2.0\ng_v = -2.0\nrho_v1 = 0.0\n[wave]\nn = 1000\n");
    let out = flock(&["wavecheck", "--config", s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["err_c_plus"].as_f64().unwrap() < 0.03);
    assert!(v["err_c_minus"].as_f64().unwrap() < 0.03);
    assert!(v["residual"].as_f64().unwrap() < 0.05);
    let bad = write(dir.path(), "wb.toml", "[wave]\nn = 100\nwidth = 60.0\n");
    assert_eq!(flock(&["wavecheck", "--config", s(&bad)]).status.code(), Some(2));
}

#[test]
fn optimize_finds_the_table_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "o.toml", "[model]\ng_x = -2.0\ng_v = -2.0\n");
    let out = flock(&["optimize", "--config", s(&cfg)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    assert!((v["I_E"].as_f64().unwrap() - 0.17678).abs() < 1e-5);
    assert!(v["rho_v1"].as_f64().unwrap().abs() < 1e-3);
    assert_eq!(serde_json::to_string_pretty(&v).unwrap() + "\n", text);
}

#[test]
fn small_study_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "st.toml",
        "[study]\nn_list = [20, 40, 80]\nrho_v1_list = [0.0, -0.3]\ng_v_list = [-1.0]\n",
    );
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for (p, w) in [(&a, "1"), (&b, "3")] {
        let out = flock(&["study", "--config", s(&cfg), "--out", s(p), "--workers", w]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("N,boundary,rho_v1,g_v,A1_meas,A1_pred,T_meas,T_pred,alpha_meas,alpha_pred,err_A1,err_T,err_alpha,status")
    );
    assert_eq!(lines.count(), 3 * 2 * 2);
    let slopes = fs::read_to_string(dir.path().join("a_slopes.csv")).unwrap();
    assert!(slopes.starts_with("boundary,rho_v1,g_v,slope_A1,slope_T,slope_alpha\n"));
    assert_eq!(slopes.lines().count(), 1 + 2 * 2);
    assert_eq!(flock(&["study", "--config", s(&cfg), "--workers", "0"]).status.code(), Some(2));
}

#[test]
fn compare_writes_traces_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[run]\ntrace_agent_stride = 50\n");
    let out_dir = dir.path().join("cmp");
    let out = flock(&["compare", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["trace_rho_v1_-0.5.csv", "trace_rho_v1_0.csv"] {
        let t = fs::read_to_string(out_dir.join(name)).unwrap();
        assert!(t.starts_with("t,agent_index,position_rel_leader\n"));
        assert!(t.lines().count() > 100);
    }
    let table = fs::read_to_string(out_dir.join("comparison.csv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    let a1 = |r: &Vec<&str>| r[3].parse::<f64>().unwrap().abs();
    assert!(a1(&rows[1]) < a1(&rows[0]));
    assert_eq!(rows[0][9], "inf");
}
