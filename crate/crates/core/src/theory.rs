//! Closed-form transient predictions for canonical arrays.
//!
//! Everything here is a pure function of the parameters. Inputs are expected
//! in canonical form (`ρ_{x,0} = ρ_{v,0} = 1`, `ρ_{x,±1} = -1/2`); use
//! [`crate::model::normalize_stencils`] first otherwise.

use serde::{Deserialize, Serialize};

use crate::error::TheoryError;
use crate::model::{normalize_stencils, violated_condition, LeaderInput, ModelParams, STENCIL_SUM_TOL};

/// Tolerance on `|c_+| - |c_-|` for calling a system marginal.
pub const MARGINAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalVelocities {
    /// Speed of the disturbance travelling away from the leader (agents/time).
    pub c_plus: f64,
    /// Speed of the reflected disturbance travelling back (negative).
    pub c_minus: f64,
}

impl SignalVelocities {
    /// `c_-/c_+`, the reflection factor applied at every round trip.
    pub fn ratio(&self) -> f64 {
        self.c_minus / self.c_plus
    }

    /// `1/c_+ - 1/c_-`, the round-trip time per agent.
    pub fn round_trip(&self) -> f64 {
        1.0 / self.c_plus - 1.0 / self.c_minus
    }

    pub fn attenuation(&self) -> f64 {
        self.ratio().powi(2)
    }
}

fn check_canonical(params: &ModelParams) -> Result<(), TheoryError> {
    if params.has_canonical_stencils()
        && params.g_x <= 0.0
        && params.g_v < 0.0
        && params.rho_v.sum().abs() <= STENCIL_SUM_TOL
    {
        Ok(())
    } else {
        Err(TheoryError::NotCanonical)
    }
}

/// Drift term `-g_v(1 + 2ρ_{v,1})`; equals `c_+ + c_-`.
fn drift(params: &ModelParams) -> f64 {
    -params.g_v * (1.0 + 2.0 * params.rho_v1())
}

pub fn signal_velocities(params: &ModelParams) -> Result<SignalVelocities, TheoryError> {
    check_canonical(params)?;
    let b = drift(params);
    let root = (b * b / 4.0 - params.g_x / 2.0).sqrt();
    Ok(SignalVelocities {
        c_plus: b / 2.0 + root,
        c_minus: b / 2.0 - root,
    })
}

/// `ρ_{x,-1} = ρ_{x,1}`, `g_xρ_{x,0} < 0` and `g_vρ_{v,0} < 0`.
pub fn necessary_conditions(params: &ModelParams) -> bool {
    violated_condition(params).is_none()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityKind {
    ViolatesNecessaryConditions,
    /// `α > 1`: extrema grow geometrically along the flock.
    AmplifyingTransients,
    /// `α = 1`: wave-equation-like, no attenuation.
    MarginalWaveEquation,
    /// `α < 1`.
    AttenuatingTravelingWave,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityClass {
    pub kind: StabilityKind,
    /// Attenuation `(c_-/c_+)²`, when the necessary conditions hold.
    pub attenuation: Option<f64>,
    /// `Some(verdict)` when `ρ_{v,1} = ρ_{x,1} = r` with unit centre weights:
    /// that family is flock stable only for `r = -1/2`.
    pub flock_stable_symmetric_family: Option<bool>,
}

pub fn classify(params: &ModelParams) -> StabilityClass {
    let close = |a: f64, b: f64| (a - b).abs() <= STENCIL_SUM_TOL;
    let in_family = close(params.rho_x.center, 1.0)
        && close(params.rho_v.center, 1.0)
        && close(params.rho_v.front, params.rho_x.front);
    let family = in_family.then(|| close(params.rho_x.front, -0.5) && necessary_conditions(params));

    let Ok(p) = normalize_stencils(params) else {
        return StabilityClass {
            kind: StabilityKind::ViolatesNecessaryConditions,
            attenuation: None,
            flock_stable_symmetric_family: family,
        };
    };
    let c = signal_velocities(&p).expect("normalized parameters are canonical");
    let gap = c.c_plus.abs() - c.c_minus.abs();
    let kind = if gap.abs() <= MARGINAL_TOL {
        StabilityKind::MarginalWaveEquation
    } else if gap < 0.0 {
        StabilityKind::AmplifyingTransients
    } else {
        StabilityKind::AttenuatingTravelingWave
    };
    StabilityClass {
        kind,
        attenuation: Some(c.attenuation()),
        flock_stable_symmetric_family: family,
    }
}

/// Predicted transient of the last agent relative to the leader after a
/// ramp start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryPrediction {
    pub velocities: SignalVelocities,
    /// Velocity relative to the leader after the `k`-th reflection, `k = 1..`.
    pub u: Vec<f64>,
    /// Equilibrium crossing times `T_k`.
    pub t_cross: Vec<f64>,
    /// Signed extrema `A_k`.
    pub amplitudes: Vec<f64>,
    /// `T_{k+2} - T_k`.
    pub period: f64,
    pub attenuation: f64,
    pub energy_index: f64,
    pub n: usize,
    pub v0: f64,
}

pub fn predict(params: &ModelParams, n: usize, v0: f64, k_max: usize) -> Result<TheoryPrediction, TheoryError> {
    let c = signal_velocities(params)?;
    let nf = n as f64;
    let ratio = c.ratio();
    let ks = 1..=k_max.max(1);
    Ok(TheoryPrediction {
        velocities: c,
        u: ks.clone().map(|k| -ratio.powi(k as i32) * v0).collect(),
        t_cross: ks.clone().map(|k| nf * c.round_trip() * k as f64).collect(),
        amplitudes: ks
            .map(|k| -ratio.powi(k as i32 - 1) * nf * v0 / c.c_plus)
            .collect(),
        period: 2.0 * nf * c.round_trip(),
        attenuation: c.attenuation(),
        energy_index: energy_index(params)?,
        n,
        v0,
    })
}

/// Predicted `z_N(t)` of the pulse-driven array, each reflected burst taken
/// to keep the leader's pulse shape.
pub fn pulse_train(
    params: &ModelParams,
    n: usize,
    pulse: &LeaderInput,
    t: f64,
) -> Result<f64, TheoryError> {
    let LeaderInput::Pulse { v0, epsilon, shape } = *pulse else {
        return Err(TheoryError::NotAPulse);
    };
    let c = signal_velocities(params)?;
    let nf = n as f64;
    let first = nf / c.c_plus;
    let spacing = c.round_trip() * nf;
    let gain = (c.c_plus - c.c_minus) / c.c_plus;
    let mut total = 0.0;
    let mut weight = 1.0;
    let mut k = 0usize;
    loop {
        let shift = first + spacing * k as f64;
        if t - shift < -epsilon {
            break;
        }
        total += weight * shape.eval(epsilon, t - shift).0;
        weight *= c.ratio();
        k += 1;
    }
    Ok(gain * total * v0)
}

/// Time integral of the `k`-th burst of [`pulse_train`]:
/// `((c_+ - c_-)/c_+)(c_-/c_+)^k v0`.
pub fn burst_integral(params: &ModelParams, v0: f64, k: usize) -> Result<f64, TheoryError> {
    let c = signal_velocities(params)?;
    Ok((c.c_plus - c.c_minus) / c.c_plus * c.ratio().powi(k as i32) * v0)
}

/// `I_E = 1/(c_+² - c_-²)`, infinite when the series of squared extrema
/// does not converge.
pub fn energy_index(params: &ModelParams) -> Result<f64, TheoryError> {
    check_canonical(params)?;
    let b = drift(params);
    // c_+² - c_-² = (c_+ + c_-)(c_+ - c_-)
    let diff = 2.0 * (b * b / 4.0 - params.g_x / 2.0).sqrt();
    let denom = b * diff;
    if b <= MARGINAL_TOL * params.g_v.abs().max(1.0) || !(denom > 0.0) {
        Ok(f64::INFINITY)
    } else {
        Ok(1.0 / denom)
    }
}

/// `max{-g_x/g_v, g_v(1 - 2√(|r|(1+r)))}` for `r ∈ (-1, 0)`.
pub fn spectral_bound(g_x: f64, g_v: f64, r: f64) -> Result<f64, TheoryError> {
    if !(r > -1.0 && r < 0.0) {
        return Err(TheoryError::OutOfRange(r));
    }
    let slow = -g_x / g_v;
    let fast = g_v * (1.0 - 2.0 * (r.abs() * (1.0 + r)).sqrt());
    Ok(slow.max(fast))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyOptimum {
    pub rho_v1: f64,
    pub energy_index: f64,
    pub attenuation: f64,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimize `I_E` over `ρ_{v,1} ∈ [lo, hi]` among attenuating systems
/// (`α < 1`) by golden-section search.
pub fn optimize_energy_index(g_x: f64, g_v: f64, lo: f64, hi: f64) -> Result<EnergyOptimum, TheoryError> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(TheoryError::InvalidRange { lo, hi });
    }
    if !(g_x < 0.0 && g_v < 0.0) {
        return Err(TheoryError::NotCanonical);
    }
    let objective = |rho: f64| energy_index(&ModelParams::canonical(g_x, g_v, rho)).unwrap_or(f64::INFINITY);
    let admissible = |rho: f64| {
        let c = signal_velocities(&ModelParams::canonical(g_x, g_v, rho)).expect("canonical");
        c.c_plus.abs() - c.c_minus.abs() > MARGINAL_TOL
    };
    // α < 1 exactly when 1 + 2ρ_{v,1} > 0
    let edge = -0.5;
    if hi < edge || (hi <= edge && !admissible(hi)) {
        return Err(if hi >= edge - MARGINAL_TOL {
            TheoryError::NoFiniteOptimum { lo, hi }
        } else {
            TheoryError::EmptyAdmissibleSet { lo, hi }
        });
    }
    let mut a = lo.max(edge);
    let mut b = hi;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    while b - a > 1e-12 * (1.0 + a.abs().max(b.abs())) {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = objective(x2);
        }
    }
    let mut best = (0.5 * (a + b), objective(0.5 * (a + b)));
    for cand in [lo.max(edge), hi] {
        let f = objective(cand);
        if admissible(cand) && f < best.1 {
            best = (cand, f);
        }
    }
    if !best.1.is_finite() {
        return Err(TheoryError::NoFiniteOptimum { lo, hi });
    }
    let c = signal_velocities(&ModelParams::canonical(g_x, g_v, best.0)).expect("canonical");
    Ok(EnergyOptimum {
        rho_v1: best.0,
        energy_index: best.1,
        attenuation: c.attenuation(),
    })
}
