//! Linearized nearest-neighbour oscillator arrays.
//!
//! Agents `1..=n` carry state; the leader (agent 0) is a prescribed forcing
//! term. The state vector is laid out as `(z_1..z_n, ż_1..ż_n)`.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::integrator::OdeSystem;

/// Tolerance for the zero-sum constraint on stencil weights.
pub const STENCIL_SUM_TOL: f64 = 1e-12;

/// Weights applied to the rear neighbour, the agent itself and the front
/// neighbour: `(ρ_{-1}, ρ_0, ρ_{+1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stencil {
    pub back: f64,
    pub center: f64,
    pub front: f64,
}

impl Stencil {
    pub const fn new(back: f64, center: f64, front: f64) -> Self {
        Self {
            back,
            center,
            front,
        }
    }

    /// Canonical stencil with unit centre weight and a given front weight;
    /// the rear weight follows from the zero-sum constraint.
    pub fn from_front(front: f64) -> Self {
        Self::new(-1.0 - front, 1.0, front)
    }

    pub fn sum(&self) -> f64 {
        self.back + self.center + self.front
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.back * factor, self.center * factor, self.front * factor)
    }

    #[inline]
    fn apply(&self, prev: f64, here: f64, next: f64) -> f64 {
        self.back * prev + self.center * here + self.front * next
    }
}

/// Coupling gains and stencils of the linearized dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub g_x: f64,
    pub g_v: f64,
    pub rho_x: Stencil,
    pub rho_v: Stencil,
}

impl ModelParams {
    /// Canonical form: `ρ_{x,0} = ρ_{v,0} = 1`, `ρ_{x,±1} = -1/2`, the
    /// velocity stencil parameterized by its front weight `ρ_{v,1}`.
    pub fn canonical(g_x: f64, g_v: f64, rho_v1: f64) -> Self {
        Self {
            g_x,
            g_v,
            rho_x: Stencil::new(-0.5, 1.0, -0.5),
            rho_v: Stencil::from_front(rho_v1),
        }
    }

    pub fn rho_v1(&self) -> f64 {
        self.rho_v.front
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.g_x.is_finite() && self.g_v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        for (name, s) in [("rho_x", &self.rho_x), ("rho_v", &self.rho_v)] {
            if ![s.back, s.center, s.front].iter().all(|w| w.is_finite()) {
                return Err(ModelError::NonFinite);
            }
            if s.sum().abs() > STENCIL_SUM_TOL {
                return Err(ModelError::StencilSum {
                    stencil: name,
                    sum: s.sum(),
                });
            }
        }
        Ok(())
    }

    /// True when the stencils are already in canonical form (signs of the
    /// gains are not checked).
    pub fn has_canonical_stencils(&self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= STENCIL_SUM_TOL;
        close(self.rho_x.center, 1.0)
            && close(self.rho_v.center, 1.0)
            && close(self.rho_x.back, -0.5)
            && close(self.rho_x.front, -0.5)
    }
}

/// How the last agent's equation closes the array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Drop the missing rear neighbour: `β_x = -ρ_{x,-1}`, `β_v = -ρ_{v,-1}`.
    VariableMass,
    /// `β_x = β_v = 1`.
    Regular,
    Custom { beta_x: f64, beta_v: f64 },
    /// Ring without a leader.
    Periodic,
}

impl BoundaryKind {
    /// Resolved last-agent coefficients; `None` for the ring.
    pub fn resolve(&self, params: &ModelParams) -> Option<BoundaryCoefficients> {
        match *self {
            BoundaryKind::VariableMass => Some(BoundaryCoefficients {
                beta_x: -params.rho_x.back,
                beta_v: -params.rho_v.back,
            }),
            BoundaryKind::Regular => Some(BoundaryCoefficients {
                beta_x: 1.0,
                beta_v: 1.0,
            }),
            BoundaryKind::Custom { beta_x, beta_v } => Some(BoundaryCoefficients { beta_x, beta_v }),
            BoundaryKind::Periodic => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            BoundaryKind::VariableMass => "variable_mass",
            BoundaryKind::Regular => "regular",
            BoundaryKind::Custom { .. } => "custom",
            BoundaryKind::Periodic => "periodic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCoefficients {
    pub beta_x: f64,
    pub beta_v: f64,
}

/// Compactly supported unit-integral profiles for the pulse leader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    /// `p(t) = cos²(πt / 2ε) / ε` on `|t| ≤ ε`.
    #[default]
    RaisedCosine,
}

impl PulseShape {
    /// Profile value and time derivative at `t` for half-width `epsilon`.
    pub fn eval(&self, epsilon: f64, t: f64) -> (f64, f64) {
        match self {
            PulseShape::RaisedCosine => {
                if t.abs() > epsilon {
                    return (0.0, 0.0);
                }
                let arg = std::f64::consts::PI * t / (2.0 * epsilon);
                let value = arg.cos().powi(2) / epsilon;
                // d/dt cos²(a t) = -a sin(2 a t)
                let slope = -std::f64::consts::PI / (2.0 * epsilon * epsilon) * (2.0 * arg).sin();
                (value, slope)
            }
        }
    }
}

/// Prescribed orbit of agent 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeaderInput {
    /// At rest for `t < 0`, constant velocity `v0` afterwards.
    Ramp { v0: f64 },
    /// `z_0(t) = v0 · p(t)` with `p` supported in `[-ε, ε]`.
    Pulse {
        v0: f64,
        epsilon: f64,
        #[serde(default)]
        shape: PulseShape,
    },
}

impl LeaderInput {
    pub fn v0(&self) -> f64 {
        match *self {
            LeaderInput::Ramp { v0 } | LeaderInput::Pulse { v0, .. } => v0,
        }
    }

    /// Same input with the leader velocity replaced.
    pub fn with_v0(self, v0: f64) -> Self {
        match self {
            LeaderInput::Ramp { .. } => LeaderInput::Ramp { v0 },
            LeaderInput::Pulse { epsilon, shape, .. } => LeaderInput::Pulse { v0, epsilon, shape },
        }
    }

    /// Leader position and velocity at time `t`.
    pub fn orbit(&self, t: f64) -> (f64, f64) {
        match *self {
            LeaderInput::Ramp { v0 } => {
                if t >= 0.0 {
                    (v0 * t, v0)
                } else {
                    (0.0, 0.0)
                }
            }
            LeaderInput::Pulse { v0, epsilon, shape } => {
                let (p, dp) = shape.eval(epsilon, t);
                (v0 * p, v0 * dp)
            }
        }
    }
}

/// Free function form of [`LeaderInput::orbit`].
pub fn leader_orbit(leader: &LeaderInput, t: f64) -> (f64, f64) {
    leader.orbit(t)
}

/// An assembled array: parameters, closure, forcing and size.
#[derive(Debug, Clone, PartialEq)]
pub struct FlockSystem {
    params: ModelParams,
    boundary: BoundaryKind,
    coefficients: Option<BoundaryCoefficients>,
    leader: Option<LeaderInput>,
    n: usize,
}

/// Build a system after checking sizes, stencil sums and the leader/ring
/// compatibility.
pub fn assemble(
    params: ModelParams,
    boundary: BoundaryKind,
    leader: Option<LeaderInput>,
    n: usize,
) -> Result<FlockSystem, ModelError> {
    if n < 2 {
        return Err(ModelError::TooFewAgents(n));
    }
    params.validate()?;
    match (boundary, &leader) {
        (BoundaryKind::Periodic, Some(_)) => return Err(ModelError::PeriodicWithLeader),
        (BoundaryKind::Periodic, None) => {}
        (_, None) => return Err(ModelError::MissingLeader),
        (_, Some(l)) => {
            if let LeaderInput::Pulse { epsilon, .. } = l {
                if !(*epsilon > 0.0 && epsilon.is_finite()) {
                    return Err(ModelError::InvalidPulseWidth(*epsilon));
                }
            }
        }
    }
    if let BoundaryKind::Custom { beta_x, beta_v } = boundary {
        if !(beta_x.is_finite() && beta_v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
    }
    Ok(FlockSystem {
        params,
        boundary,
        coefficients: boundary.resolve(&params),
        leader,
        n,
    })
}

impl FlockSystem {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn boundary(&self) -> BoundaryKind {
        self.boundary
    }

    pub fn coefficients(&self) -> Option<BoundaryCoefficients> {
        self.coefficients
    }

    pub fn leader(&self) -> Option<&LeaderInput> {
        self.leader.as_ref()
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    fn leader_state(&self, t: f64) -> (f64, f64) {
        self.leader.map_or((0.0, 0.0), |l| l.orbit(t))
    }

    /// Checked evaluation of the vector field.
    pub fn rhs_eval(&self, t: f64, state: &[f64]) -> Result<Vec<f64>, ModelError> {
        if state.len() != 2 * self.n {
            return Err(ModelError::Dimension {
                expected: 2 * self.n,
                got: state.len(),
            });
        }
        let mut out = vec![0.0; 2 * self.n];
        self.rhs(t, state, &mut out);
        Ok(out)
    }
}

impl OdeSystem for FlockSystem {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn rhs(&self, t: f64, state: &[f64], out: &mut [f64]) {
        let n = self.n;
        let (z, v) = state.split_at(n);
        let (dz, dv) = out.split_at_mut(n);
        dz.copy_from_slice(v);

        let ModelParams {
            g_x,
            g_v,
            rho_x,
            rho_v,
        } = self.params;

        match self.coefficients {
            None => {
                for k in 0..n {
                    let prev = if k == 0 { n - 1 } else { k - 1 };
                    let next = if k + 1 == n { 0 } else { k + 1 };
                    dv[k] = g_x * rho_x.apply(z[prev], z[k], z[next])
                        + g_v * rho_v.apply(v[prev], v[k], v[next]);
                }
            }
            Some(BoundaryCoefficients { beta_x, beta_v }) => {
                let (z0, v0) = self.leader_state(t);
                dv[0] = g_x * rho_x.apply(z0, z[0], z[1]) + g_v * rho_v.apply(v0, v[0], v[1]);
                for k in 1..n - 1 {
                    dv[k] = g_x * rho_x.apply(z[k - 1], z[k], z[k + 1])
                        + g_v * rho_v.apply(v[k - 1], v[k], v[k + 1]);
                }
                dv[n - 1] =
                    g_x * beta_x * (z[n - 1] - z[n - 2]) + g_v * beta_v * (v[n - 1] - v[n - 2]);
            }
        }
    }

    fn observable_names(&self) -> &'static [&'static str] {
        &["y", "z_N", "z_0"]
    }

    fn observe(&self, t: f64, state: &[f64], out: &mut [f64]) {
        let z_last = state[self.n - 1];
        let z_lead = self.leader_state(t).0;
        out[0] = z_last - z_lead;
        out[1] = z_last;
        out[2] = z_lead;
    }
}

/// One of the necessary conditions for asymptotic and flock stability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NecessaryCondition {
    SymmetricPositionStencil,
    PositionGainSign,
    VelocityGainSign,
}

impl NecessaryCondition {
    pub fn formula(&self) -> &'static str {
        match self {
            NecessaryCondition::SymmetricPositionStencil => "ρ_{x,-1}=ρ_{x,1}",
            NecessaryCondition::PositionGainSign => "g_xρ_{x,0}<0",
            NecessaryCondition::VelocityGainSign => "g_vρ_{v,0}<0",
        }
    }
}

impl std::fmt::Display for NecessaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.formula())
    }
}

/// First violated necessary condition, if any.
pub fn violated_condition(params: &ModelParams) -> Option<NecessaryCondition> {
    if (params.rho_x.back - params.rho_x.front).abs() > STENCIL_SUM_TOL {
        Some(NecessaryCondition::SymmetricPositionStencil)
    } else if !(params.g_x * params.rho_x.center < 0.0) {
        Some(NecessaryCondition::PositionGainSign)
    } else if !(params.g_v * params.rho_v.center < 0.0) {
        Some(NecessaryCondition::VelocityGainSign)
    } else {
        None
    }
}

/// Divide the centre weights into the gains so that `ρ_{x,0} = ρ_{v,0} = 1`.
/// Time is left untouched.
pub fn normalize_stencils(params: &ModelParams) -> Result<ModelParams, NecessaryCondition> {
    if let Some(c) = violated_condition(params) {
        return Err(c);
    }
    let (cx, cv) = (params.rho_x.center, params.rho_v.center);
    Ok(ModelParams {
        g_x: params.g_x * cx,
        g_v: params.g_v * cv,
        rho_x: params.rho_x.scaled(1.0 / cx),
        rho_v: params.rho_v.scaled(1.0 / cv),
    })
}

/// Canonical parameters with `|g_x| = 1` and the factor `s = √|g_x|` of the
/// time change `τ = s·t` that carries the original dynamics onto them.
pub fn normalize(params: &ModelParams) -> Result<(ModelParams, f64), NecessaryCondition> {
    let p = normalize_stencils(params)?;
    let s = (-p.g_x).sqrt();
    Ok((
        ModelParams {
            g_x: -1.0,
            g_v: p.g_v / s,
            ..p
        },
        s,
    ))
}
