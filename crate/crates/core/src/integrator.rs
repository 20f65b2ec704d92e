//! Explicit Runge–Kutta integration sampled onto a uniform output grid.
//!
//! [`integrate_adaptive`] is Dormand–Prince 5(4) with proportional-integral
//! step control and the fourth-order continuous extension used for dense
//! output. [`integrate_fixed_rk4`] is the classical fixed-step scheme, kept
//! as an independent reference.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, FailureReason, IntegrateError, IntegrationFailure};

/// A first-order system `y' = f(t, y)` with a fixed set of scalar
/// observables.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, state: &[f64], out: &mut [f64]);

    fn observable_names(&self) -> &'static [&'static str] {
        &[]
    }

    fn observe(&self, _t: f64, _state: &[f64], _out: &mut [f64]) {}
}

/// Default number of output intervals when no sample spacing is given.
pub const DEFAULT_SAMPLE_INTERVALS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub initial_step: f64,
    /// `None` caps steps at a tenth of the span.
    pub max_step: Option<f64>,
    /// `None` splits the span into [`DEFAULT_SAMPLE_INTERVALS`] intervals.
    pub sample_dt: Option<f64>,
    /// Keep the full state at every `k`-th output sample.
    pub snapshot_stride: Option<usize>,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-6,
            initial_step: 1e-2,
            max_step: None,
            sample_dt: None,
            snapshot_stride: None,
            max_steps: 50_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !pos(self.rel_tol) {
            return Err(ConfigError::Integrator("rel_tol must be > 0"));
        }
        if !pos(self.abs_tol) {
            return Err(ConfigError::Integrator("abs_tol must be > 0"));
        }
        if !pos(self.initial_step) {
            return Err(ConfigError::Integrator("initial_step must be > 0"));
        }
        if let Some(h) = self.max_step {
            if !(h >= self.initial_step) {
                return Err(ConfigError::Integrator("max_step must be >= initial_step"));
            }
        }
        if let Some(dt) = self.sample_dt {
            if !pos(dt) {
                return Err(ConfigError::Integrator("sample_dt must be > 0"));
            }
        }
        if self.snapshot_stride == Some(0) {
            return Err(ConfigError::Integrator("snapshot_stride must be >= 1"));
        }
        Ok(())
    }
}

/// Full-state samples at a decimated subset of the output grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Snapshots {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Uniformly sampled output of one integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub series: BTreeMap<String, Vec<f64>>,
    pub snapshots: Option<Snapshots>,
}

impl Trajectory {
    fn new(t0: f64, dt: f64, names: &[&str], snapshots: bool) -> Self {
        Self {
            t0,
            dt,
            times: Vec::new(),
            series: names.iter().map(|n| (n.to_string(), Vec::new())).collect(),
            snapshots: snapshots.then(Snapshots::default),
        }
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.series.get(name).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Records observables at grid points as they are reached.
struct Recorder<'a, S: OdeSystem> {
    sys: &'a S,
    names: &'static [&'static str],
    traj: Trajectory,
    count: usize,
    stride: Option<usize>,
    scratch: Vec<f64>,
}

impl<'a, S: OdeSystem> Recorder<'a, S> {
    fn new(sys: &'a S, t0: f64, dt: f64, count: usize, stride: Option<usize>) -> Self {
        let names = sys.observable_names();
        Self {
            sys,
            names,
            traj: Trajectory::new(t0, dt, names, stride.is_some()),
            count,
            stride,
            scratch: vec![0.0; names.len()],
        }
    }

    fn next_index(&self) -> usize {
        self.traj.times.len()
    }

    fn done(&self) -> bool {
        self.next_index() >= self.count
    }

    fn grid_time(&self, i: usize) -> f64 {
        self.traj.t0 + i as f64 * self.traj.dt
    }

    fn push(&mut self, state: &[f64]) {
        let i = self.next_index();
        let t = self.grid_time(i);
        self.sys.observe(t, state, &mut self.scratch);
        for (name, v) in self.names.iter().zip(&self.scratch) {
            if let Some(s) = self.traj.series.get_mut(*name) {
                s.push(*v);
            }
        }
        if let (Some(k), Some(snaps)) = (self.stride, self.traj.snapshots.as_mut()) {
            if i.is_multiple_of(k) {
                snaps.times.push(t);
                snaps.states.push(state.to_vec());
            }
        }
        self.traj.times.push(t);
    }
}

fn sample_count(span: f64, dt: f64) -> usize {
    (span / dt * (1.0 + 1e-12)).floor() as usize + 1
}

fn check_inputs<S: OdeSystem>(sys: &S, t_span: (f64, f64), y0: &[f64]) -> Result<(), ConfigError> {
    let (t0, t1) = t_span;
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(ConfigError::Span { t0, t1 });
    }
    if y0.len() != sys.dim() {
        return Err(ConfigError::Dimension {
            expected: sys.dim(),
            got: y0.len(),
        });
    }
    if !y0.iter().all(|x| x.is_finite()) {
        return Err(ConfigError::NonFiniteInitialState);
    }
    Ok(())
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_BETA: f64 = 0.04;

/// Adaptive Dormand–Prince integration over `t_span`, sampled every
/// `config.sample_dt`.
///
/// The local error estimate is held below `abs_tol + rel_tol·|y|` in every
/// component (max norm).
pub fn integrate_adaptive<S: OdeSystem>(
    sys: &S,
    t_span: (f64, f64),
    config: &IntegratorConfig,
    initial_state: &[f64],
) -> Result<Trajectory, IntegrateError> {
    config.validate()?;
    check_inputs(sys, t_span, initial_state)?;
    let (t0, t1) = t_span;
    let span = t1 - t0;
    let sample_dt = config
        .sample_dt
        .unwrap_or(span / DEFAULT_SAMPLE_INTERVALS as f64);
    let max_step = config.max_step.unwrap_or(span / 10.0);
    let dim = sys.dim();

    let mut rec = Recorder::new(sys, t0, sample_dt, sample_count(span, sample_dt), config.snapshot_stride);

    let mut y = initial_state.to_vec();
    rec.push(&y);

    let mut k = vec![vec![0.0; dim]; 7];
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut dense_tail = vec![0.0; dim];
    let mut interp = vec![0.0; dim];

    sys.rhs(t0, &y, &mut k[0]);
    let mut t = t0;
    let mut h = config.initial_step.min(max_step).min(span);
    let mut err_old = 1e-4_f64;
    let mut rejected_last = false;
    let mut steps = 0usize;

    let fail = |reason, t_last: f64, rec: Recorder<'_, S>| {
        IntegrateError::Failed(IntegrationFailure {
            reason,
            t_last,
            partial: Box::new(rec.traj),
        })
    };

    while t < t1 && !rec.done() {
        if steps >= config.max_steps {
            return Err(fail(FailureReason::TooManySteps, t, rec));
        }
        steps += 1;
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(fail(FailureReason::StepUnderflow, t, rec));
        }

        macro_rules! stage {
            ($dst:expr, $c:expr, [$(($a:expr, $j:expr)),*]) => {{
                for i in 0..dim {
                    stage[i] = y[i] + h * (0.0 $(+ $a * k[$j][i])*);
                }
                let (_, rest) = k.split_at_mut($dst);
                sys.rhs(t + $c * h, &stage, &mut rest[0]);
            }};
        }
        stage!(1, C2, [(A21, 0)]);
        stage!(2, C3, [(A31, 0), (A32, 1)]);
        stage!(3, C4, [(A41, 0), (A42, 1), (A43, 2)]);
        stage!(4, C5, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
        stage!(5, 1.0, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
        for i in 0..dim {
            y_new[i] = y[i]
                + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
        }
        let t_new = if last { t1 } else { t + h };
        {
            let (_, rest) = k.split_at_mut(6);
            sys.rhs(t_new, &y_new, &mut rest[0]);
        }

        let mut err = 0.0_f64;
        let mut finite = true;
        for i in 0..dim {
            let e = h
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                    + E7 * k[6][i]);
            let sc = config.abs_tol + config.rel_tol * y[i].abs().max(y_new[i].abs());
            let r = (e / sc).abs();
            if !r.is_finite() || !y_new[i].is_finite() {
                finite = false;
            }
            err = err.max(r);
        }
        if !finite {
            if h <= 1e-14 * t.abs().max(1.0) * 1e3 {
                return Err(fail(FailureReason::NonFiniteState, t, rec));
            }
            h *= FAC_MIN;
            rejected_last = true;
            continue;
        }

        let fac11 = err.powf(0.2 - PI_BETA * 0.75);
        if err <= 1.0 {
            // dense output over [t, t_new]
            let mut tail_ready = false;
            while !rec.done() {
                let ti = rec.grid_time(rec.next_index());
                if ti > t_new && !(last && ti <= t1 + 1e-9 * span) {
                    break;
                }
                if !tail_ready {
                    for i in 0..dim {
                        dense_tail[i] = h
                            * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i]
                                + D6 * k[5][i]
                                + D7 * k[6][i]);
                    }
                    tail_ready = true;
                }
                let theta = ((ti - t) / h).clamp(0.0, 1.0);
                let theta1 = 1.0 - theta;
                for i in 0..dim {
                    let r2 = y_new[i] - y[i];
                    let r3 = h * k[0][i] - r2;
                    let r4 = r2 - h * k[6][i] - r3;
                    interp[i] = y[i]
                        + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * dense_tail[i])));
                }
                rec.push(&interp);
            }

            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            t = t_new;

            let mut fac = (fac11 / err_old.powf(PI_BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            if rejected_last {
                fac = fac.max(1.0);
            }
            h = (h / fac).min(max_step);
            err_old = err.max(1e-4);
            rejected_last = false;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            rejected_last = true;
        }
    }

    while !rec.done() {
        // only reachable through rounding at the end of the span
        rec.push(&y);
    }
    Ok(rec.traj)
}

/// Settings for the fixed-step reference integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedStepConfig {
    pub dt: f64,
    /// Record observables every `sample_every` steps.
    pub sample_every: usize,
    pub snapshot_stride: Option<usize>,
}

impl FixedStepConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            sample_every: 1,
            snapshot_stride: None,
        }
    }
}

/// Classical RK4 with constant step `config.dt`, which must divide the
/// span into a whole number of steps.
pub fn integrate_fixed_rk4<S: OdeSystem>(
    sys: &S,
    t_span: (f64, f64),
    config: &FixedStepConfig,
    initial_state: &[f64],
) -> Result<Trajectory, IntegrateError> {
    check_inputs(sys, t_span, initial_state)?;
    let (t0, t1) = t_span;
    let span = t1 - t0;
    let dt = config.dt;
    if !(dt > 0.0) || config.sample_every == 0 || config.snapshot_stride == Some(0) {
        return Err(ConfigError::Integrator("dt and strides must be positive").into());
    }
    let steps_f = span / dt;
    let steps = steps_f.round() as usize;
    if steps == 0 || (steps_f - steps as f64).abs() > 1e-9 * steps_f.max(1.0) {
        return Err(ConfigError::StepDoesNotDivide { dt, span }.into());
    }
    if !steps.is_multiple_of(config.sample_every) {
        return Err(ConfigError::StepDoesNotDivide {
            dt: dt * config.sample_every as f64,
            span,
        }
        .into());
    }
    let dim = sys.dim();
    let sample_dt = dt * config.sample_every as f64;
    let mut rec = Recorder::new(sys, t0, sample_dt, steps / config.sample_every + 1, config.snapshot_stride);
    let mut y = initial_state.to_vec();
    rec.push(&y);

    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];

    for step in 0..steps {
        let t = t0 + step as f64 * dt;
        sys.rhs(t, &y, &mut k1);
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        sys.rhs(t + 0.5 * dt, &tmp, &mut k2);
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        sys.rhs(t + 0.5 * dt, &tmp, &mut k3);
        for i in 0..dim {
            tmp[i] = y[i] + dt * k3[i];
        }
        sys.rhs(t + dt, &tmp, &mut k4);
        let mut finite = true;
        for i in 0..dim {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            finite &= y[i].is_finite();
        }
        if !finite {
            return Err(IntegrateError::Failed(IntegrationFailure {
                reason: FailureReason::NonFiniteState,
                t_last: t,
                partial: Box::new(rec.traj),
            }));
        }
        if (step + 1) % config.sample_every == 0 {
            rec.push(&y);
        }
    }
    Ok(rec.traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// z'' = -z
    struct Harmonic;

    impl OdeSystem for Harmonic {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, s: &[f64], out: &mut [f64]) {
            out[0] = s[1];
            out[1] = -s[0];
        }
        fn observable_names(&self) -> &'static [&'static str] {
            &["z", "v"]
        }
        fn observe(&self, _t: f64, s: &[f64], out: &mut [f64]) {
            out[0] = s[0];
            out[1] = s[1];
        }
    }

    /// Decoupled decay y_i' = -λ_i y_i.
    struct Decay(Vec<f64>);

    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn rhs(&self, _t: f64, s: &[f64], out: &mut [f64]) {
            for i in 0..s.len() {
                out[i] = -self.0[i] * s[i];
            }
        }
        fn observable_names(&self) -> &'static [&'static str] {
            &["y0", "y1"]
        }
        fn observe(&self, _t: f64, s: &[f64], out: &mut [f64]) {
            out[0] = s[0];
            out[1] = s[1];
        }
    }

    fn rk4_error(steps: usize) -> f64 {
        let cfg = FixedStepConfig::new(2.0 * PI / steps as f64);
        let tr = integrate_fixed_rk4(&Harmonic, (0.0, 2.0 * PI), &cfg, &[1.0, 0.0]).unwrap();
        // the phase error (visible in v) is fourth order; the amplitude error
        // in z alone would be fifth
        let z = tr.series("z").unwrap().last().unwrap() - 1.0;
        let v = *tr.series("v").unwrap().last().unwrap();
        z.abs().max(v.abs())
    }

    #[test]
    fn rk4_closes_the_orbit() {
        assert!(rk4_error(6284) < 1e-6);
    }

    #[test]
    fn rk4_is_fourth_order() {
        // coarse enough that rounding does not mask the truncation error
        let a = rk4_error(50);
        let b = rk4_error(100);
        let ratio = a / b;
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rk4_is_bitwise_reproducible() {
        let cfg = FixedStepConfig::new(0.01);
        let a = integrate_fixed_rk4(&Harmonic, (0.0, 3.0), &cfg, &[1.0, 0.5]).unwrap();
        let b = integrate_fixed_rk4(&Harmonic, (0.0, 3.0), &cfg, &[1.0, 0.5]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rk4_rejects_non_dividing_step() {
        let cfg = FixedStepConfig::new(0.3);
        assert!(matches!(
            integrate_fixed_rk4(&Harmonic, (0.0, 1.0), &cfg, &[1.0, 0.0]),
            Err(IntegrateError::Config(ConfigError::StepDoesNotDivide { .. }))
        ));
    }

    #[test]
    fn adaptive_error_within_tolerance_on_decay() {
        let sys = Decay(vec![0.5, 2.0, 10.0]);
        let cfg = IntegratorConfig {
            sample_dt: Some(0.01),
            ..Default::default()
        };
        let tr = integrate_adaptive(&sys, (0.0, 5.0), &cfg, &[1.0, -3.0, 2.0]).unwrap();
        for (name, lam, y0) in [("y0", 0.5, 1.0), ("y1", 2.0, -3.0)] {
            for (t, y) in tr.times.iter().zip(tr.series(name).unwrap()) {
                let exact: f64 = y0 * (-lam * t).exp();
                let bound = 10.0 * (cfg.abs_tol + cfg.rel_tol * exact.abs());
                assert!((y - exact).abs() <= bound, "{name} t={t}: {y} vs {exact}");
            }
        }
    }

    #[test]
    fn adaptive_harmonic_matches_closed_form() {
        let cfg = IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            sample_dt: Some(0.05),
            ..Default::default()
        };
        let tr = integrate_adaptive(&Harmonic, (0.0, 10.0), &cfg, &[1.0, 0.0]).unwrap();
        for (t, z) in tr.times.iter().zip(tr.series("z").unwrap()) {
            assert!((z - t.cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn output_grid_has_no_drift() {
        let cfg = IntegratorConfig {
            sample_dt: Some(0.1),
            ..Default::default()
        };
        let tr = integrate_adaptive(&Harmonic, (1.0, 101.0), &cfg, &[1.0, 0.0]).unwrap();
        assert_eq!(tr.len(), 1001);
        for (i, t) in tr.times.iter().enumerate() {
            assert_eq!(*t, 1.0 + i as f64 * 0.1);
        }
        assert_eq!(tr.series("z").unwrap().len(), 1001);
    }

    #[test]
    fn default_sampling_uses_4096_intervals() {
        let tr = integrate_adaptive(&Harmonic, (0.0, 8.0), &IntegratorConfig::default(), &[1.0, 0.0]).unwrap();
        assert_eq!(tr.len(), DEFAULT_SAMPLE_INTERVALS + 1);
    }

    #[test]
    fn snapshots_follow_stride() {
        let cfg = IntegratorConfig {
            sample_dt: Some(0.5),
            snapshot_stride: Some(4),
            ..Default::default()
        };
        let tr = integrate_adaptive(&Harmonic, (0.0, 10.0), &cfg, &[1.0, 0.0]).unwrap();
        let snaps = tr.snapshots.as_ref().unwrap();
        assert_eq!(snaps.times, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert!((snaps.states[1][0] - 2f64.cos()).abs() < 1e-5);
    }

    #[test]
    fn blow_up_is_reported_with_partial_output() {
        struct Explode;
        impl OdeSystem for Explode {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _t: f64, s: &[f64], out: &mut [f64]) {
                out[0] = s[0] * s[0];
            }
        }
        let cfg = IntegratorConfig {
            sample_dt: Some(0.01),
            ..Default::default()
        };
        match integrate_adaptive(&Explode, (0.0, 2.0), &cfg, &[1.0]) {
            Err(IntegrateError::Failed(f)) => {
                assert!(f.t_last < 1.01 && f.t_last > 0.9, "{}", f.t_last);
                assert!(!f.partial.is_empty());
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let bad = IntegratorConfig {
            rel_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = IntegratorConfig {
            max_step: Some(1e-3),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(IntegratorConfig::default().validate().is_ok());
    }
}
