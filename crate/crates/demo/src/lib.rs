//! Browser demo: closed-form prediction, a small ramp-start simulation and
//! the energy-index curve, exposed through wasm-bindgen.
//!
//! The plain functions hold the logic so they can be tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors to `JsValue`.

use flock_core::experiments::ramp_horizon;
use flock_core::metrics::{measure, relative_orbit};
use flock_core::model::normalize_stencils;
use flock_core::theory::{energy_index, predict};
use flock_core::{assemble, integrate_adaptive, BoundaryKind, IntegratorConfig, LeaderInput, ModelParams};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Largest array the page may simulate; keeps a run well under a second.
pub const MAX_DEMO_AGENTS: usize = 400;

const ORBIT_SAMPLES: usize = 1024;

fn finite_or_str(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(flock_core::format::fmt15(x))
    }
}

pub fn prediction(g_x: f64, g_v: f64, rho_v1: f64, n: usize) -> Result<String, String> {
    let p = normalize_stencils(&ModelParams::canonical(g_x, g_v, rho_v1)).map_err(|c| format!("violates {c}"))?;
    let t = predict(&p, n, 1.0, 4).map_err(|e| e.to_string())?;
    Ok(json!({
        "c_plus": t.velocities.c_plus,
        "c_minus": t.velocities.c_minus,
        "A": t.amplitudes,
        "T_cross": t.t_cross,
        "period": t.period,
        "attenuation": t.attenuation,
        "I_E": finite_or_str(t.energy_index),
    })
    .to_string())
}

/// Relative orbit `y = z_N - z_0` on a uniform grid, plus its measured
/// transient.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Orbit {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
    amplitudes: Vec<f64>,
    period: f64,
}

#[wasm_bindgen]
impl Orbit {
    #[wasm_bindgen(getter)]
    pub fn t0(&self) -> f64 {
        self.t0
    }

    #[wasm_bindgen(getter)]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Measured signed extrema.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.amplitudes.clone()
    }

    /// Measured period, NaN when fewer than three crossings were found.
    #[wasm_bindgen(getter)]
    pub fn period(&self) -> f64 {
        self.period
    }
}

pub fn orbit(g_x: f64, g_v: f64, rho_v1: f64, n: usize, regular: bool) -> Result<Orbit, String> {
    if !(2..=MAX_DEMO_AGENTS).contains(&n) {
        return Err(format!("N must be in 2..={MAX_DEMO_AGENTS}"));
    }
    let params = ModelParams::canonical(g_x, g_v, rho_v1);
    let boundary = if regular {
        BoundaryKind::Regular
    } else {
        BoundaryKind::VariableMass
    };
    let t_end = ramp_horizon(&params, n, 3.0).map_err(|e| e.to_string())?;
    let sys = assemble(params, boundary, Some(LeaderInput::Ramp { v0: 1.0 }), n).map_err(|e| e.to_string())?;
    let cfg = IntegratorConfig {
        sample_dt: Some(t_end / ORBIT_SAMPLES as f64),
        ..Default::default()
    };
    let traj = integrate_adaptive(&sys, (0.0, t_end), &cfg, &vec![0.0; 2 * n]).map_err(|e| e.to_string())?;
    let y = relative_orbit(&traj).map_err(|e| e.to_string())?;
    let m = measure(&y);
    Ok(Orbit {
        t0: y.t0,
        dt: y.dt,
        amplitudes: m.amplitudes,
        period: m.period.unwrap_or(f64::NAN),
        values: y.values,
    })
}

/// `I_E` at `points` evenly spaced `ρ_{v,1}` in `[-1/2, 0]`.
pub fn energy_samples(g_x: f64, g_v: f64, points: usize) -> Result<Vec<f64>, String> {
    if points < 2 {
        return Err("need at least two points".into());
    }
    (0..points)
        .map(|i| {
            let rho = -0.5 + 0.5 * i as f64 / (points - 1) as f64;
            energy_index(&ModelParams::canonical(g_x, g_v, rho)).map_err(|e| e.to_string())
        })
        .collect()
}

#[wasm_bindgen]
pub fn predict_json(g_x: f64, g_v: f64, rho_v1: f64, n: usize) -> Result<String, JsValue> {
    prediction(g_x, g_v, rho_v1, n).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate_orbit(g_x: f64, g_v: f64, rho_v1: f64, n: usize, regular: bool) -> Result<Orbit, JsValue> {
    orbit(g_x, g_v, rho_v1, n, regular).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn energy_curve(g_x: f64, g_v: f64, points: usize) -> Result<Vec<f64>, JsValue> {
    energy_samples(g_x, g_v, points).map_err(|e| JsValue::from_str(&e))
}
