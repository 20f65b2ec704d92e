use thiserror::Error;

use crate::integrator::Trajectory;
use crate::model::NecessaryCondition;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("array needs at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("{stencil} weights must sum to zero, sum is {sum:e}")]
    StencilSum { stencil: &'static str, sum: f64 },
    #[error("periodic arrays have no leader")]
    PeriodicWithLeader,
    #[error("non-periodic arrays need a leader input")]
    MissingLeader,
    #[error("pulse half-width must be positive and finite, got {0}")]
    InvalidPulseWidth(f64),
    #[error("parameters must be finite")]
    NonFinite,
    #[error("state has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid integrator configuration: {0}")]
    Integrator(&'static str),
    #[error("time span must satisfy t1 > t0 (got {t0}, {t1})")]
    Span { t0: f64, t1: f64 },
    #[error("initial state has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("initial state is not finite")]
    NonFiniteInitialState,
    #[error("step {dt} does not divide the span {span} into whole steps")]
    StepDoesNotDivide { dt: f64, span: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    StepUnderflow,
    NonFiniteState,
    TooManySteps,
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FailureReason::StepUnderflow => "step size underflow",
            FailureReason::NonFiniteState => "non-finite state",
            FailureReason::TooManySteps => "step budget exhausted",
        })
    }
}

/// Integration stopped early; the samples taken so far are kept.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("integration failed at t = {t_last}: {reason}")]
pub struct IntegrationFailure {
    pub reason: FailureReason,
    pub t_last: f64,
    pub partial: Box<Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Failed(#[from] IntegrationFailure),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("parameters are not in canonical form (ρ_x0 = ρ_v0 = 1, ρ_x,±1 = -1/2, g_x ≤ 0, g_v < 0)")]
    NotCanonical,
    #[error("pulse prediction needs a pulse leader")]
    NotAPulse,
    #[error("r must lie in (-1, 0), got {0}")]
    OutOfRange(f64),
    #[error("no admissible ρ_v1 (α < 1) in [{lo}, {hi}]")]
    EmptyAdmissibleSet { lo: f64, hi: f64 },
    #[error("no finite optimum in [{lo}, {hi}]: I_E is infinite")]
    NoFiniteOptimum { lo: f64, hi: f64 },
    #[error("invalid search range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("trajectory has no `{0}` series")]
    MissingObservable(&'static str),
    #[error("relative error undefined for a zero prediction")]
    ZeroPrediction,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WaveError {
    #[error("pulse width {w} outside [4, N/4] for N = {n}")]
    WidthOutOfRange { w: f64, n: usize },
    #[error("trajectory carries no state snapshots")]
    NoSnapshots,
    #[error("window holds {0} snapshots, at least 20 are needed")]
    TooFewSnapshots(usize),
    #[error("pulses not separated at t = {0}")]
    Overlapping(f64),
    #[error("pulse wrapped around the ring at t = {0}")]
    Wrapped(f64),
    #[error("window too short to reconstruct the wave profiles")]
    WindowTooShort,
}

/// Any failure along a simulate-and-measure pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error("necessary stability condition {0} is violated")]
    Unstable(NecessaryCondition),
}

impl From<NecessaryCondition> for RunError {
    fn from(c: NecessaryCondition) -> Self {
        RunError::Unstable(c)
    }
}
