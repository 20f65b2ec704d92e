//! Transients in one-dimensional arrays of identical damped oscillators
//! with nearest-neighbour coupling.
//!
//! * [`model`]: the linearized array, its boundary closures and leader inputs.
//! * [`integrator`]: adaptive Dormand–Prince and fixed-step RK4.
//! * [`theory`]: signal velocities, stability classes and closed-form
//!   transient predictions.
//! * [`metrics`]: crossings, extrema, period and attenuation of a simulated orbit.
//! * [`waves`]: pulse tracking on the ring.
//! * [`experiments`]: parameter grids, convergence slopes and reference runs.

pub mod error;
pub mod experiments;
pub mod format;
pub mod integrator;
pub mod metrics;
pub mod model;
pub mod theory;
pub mod waves;

pub use error::{IntegrateError, IntegrationFailure, ModelError, RunError, TheoryError, WaveError};
pub use integrator::{integrate_adaptive, integrate_fixed_rk4, IntegratorConfig, OdeSystem, Trajectory};
pub use model::{assemble, BoundaryKind, FlockSystem, LeaderInput, ModelParams, Stencil};
