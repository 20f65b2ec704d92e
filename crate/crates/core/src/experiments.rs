//! Validation studies: the ramp-start parameter grid with its convergence
//! slopes, the symmetric-versus-asymmetric comparison, and the pulse probe.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IntegrateError, RunError};
use crate::format::{fmt15, fmt_opt};
use crate::integrator::{integrate_adaptive, IntegratorConfig, Trajectory};
use crate::metrics::{measure, relative_error, relative_orbit, Series, TransientMetrics};
use crate::model::{assemble, normalize_stencils, BoundaryKind, LeaderInput, ModelParams, PulseShape};
use crate::theory::{predict, signal_velocities, TheoryPrediction};

/// Number of predicted extrema and crossings carried with each run.
const PREDICTED_TERMS: usize = 6;

/// Duration `h·N·(1/c_+ - 1/c_-)` of a ramp-start run.
pub fn ramp_horizon(params: &ModelParams, n: usize, horizon_factor: f64) -> Result<f64, RunError> {
    let c = signal_velocities(&normalize_stencils(params)?)?;
    Ok(horizon_factor * n as f64 * c.round_trip())
}

/// Ramp start of the leader at `t = 0` from rest.
pub fn simulate_ramp(
    params: &ModelParams,
    boundary: BoundaryKind,
    n: usize,
    v0: f64,
    t_end: f64,
    integrator: &IntegratorConfig,
) -> Result<Trajectory, RunError> {
    let sys = assemble(*params, boundary, Some(LeaderInput::Ramp { v0 }), n)?;
    Ok(integrate_adaptive(&sys, (0.0, t_end), integrator, &vec![0.0; 2 * n])?)
}

/// Measured and predicted transient of one ramp-start run.
#[derive(Debug, Clone, PartialEq)]
pub struct RampRun {
    pub orbit: Series,
    pub metrics: TransientMetrics,
    pub prediction: TheoryPrediction,
}

pub fn ramp_run(
    params: &ModelParams,
    boundary: BoundaryKind,
    n: usize,
    v0: f64,
    horizon_factor: f64,
    integrator: &IntegratorConfig,
) -> Result<RampRun, RunError> {
    let canonical = normalize_stencils(params)?;
    let t_end = ramp_horizon(params, n, horizon_factor)?;
    let traj = simulate_ramp(params, boundary, n, v0, t_end, integrator)?;
    let orbit = relative_orbit(&traj)?;
    let metrics = measure(&orbit);
    let prediction = predict(&canonical, n, v0, PREDICTED_TERMS)?;
    Ok(RampRun {
        orbit,
        metrics,
        prediction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub n_list: Vec<usize>,
    pub boundaries: Vec<BoundaryKind>,
    pub rho_v1_list: Vec<f64>,
    pub g_v_list: Vec<f64>,
    pub g_x: f64,
    pub v0: f64,
    pub horizon_factor: f64,
    pub integrator: IntegratorConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n_list: vec![100, 200, 400, 800, 1600, 3200],
            boundaries: vec![BoundaryKind::VariableMass, BoundaryKind::Regular],
            rho_v1_list: vec![0.0, -0.1, -0.2, -0.3, -0.4, -0.5],
            g_v_list: vec![-0.25, -0.5, -1.0, -2.0, -4.0],
            g_x: -1.0,
            v0: 1.0,
            horizon_factor: 4.0,
            integrator: IntegratorConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_list.iter().any(|&n| n < 2) {
            return Err("every N must be at least 2".into());
        }
        if !(self.g_x < 0.0) || self.g_v_list.iter().any(|g| !(*g < 0.0)) {
            return Err("g_x and every g_v must be negative".into());
        }
        if self.boundaries.iter().any(|b| matches!(b, BoundaryKind::Periodic)) {
            return Err("the study needs a leader; periodic boundaries are not allowed".into());
        }
        if !(self.horizon_factor > 0.0) {
            return Err("horizon_factor must be positive".into());
        }
        self.integrator.validate().map_err(|e| e.to_string())
    }

    /// Grid points in output order.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &n in &self.n_list {
            for &boundary in &self.boundaries {
                for &rho_v1 in &self.rho_v1_list {
                    for &g_v in &self.g_v_list {
                        out.push(GridPoint {
                            n,
                            boundary,
                            rho_v1,
                            g_v,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub boundary: BoundaryKind,
    pub rho_v1: f64,
    pub g_v: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// Too few extrema or crossings for the period or attenuation.
    InsufficientFeatures,
    IntegrationFailure,
    Invalid,
}

impl RowStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::InsufficientFeatures => "insufficient_features",
            RowStatus::IntegrationFailure => "integration_failure",
            RowStatus::Invalid => "invalid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub point: GridPoint,
    pub a1_meas: Option<f64>,
    pub a1_pred: Option<f64>,
    pub t_meas: Option<f64>,
    pub t_pred: Option<f64>,
    pub alpha_meas: Option<f64>,
    pub alpha_pred: Option<f64>,
    pub err_a1: Option<f64>,
    pub err_t: Option<f64>,
    pub err_alpha: Option<f64>,
    pub status: RowStatus,
}

impl StudyRow {
    fn failed(point: GridPoint, status: RowStatus) -> Self {
        Self {
            point,
            a1_meas: None,
            a1_pred: None,
            t_meas: None,
            t_pred: None,
            alpha_meas: None,
            alpha_pred: None,
            err_a1: None,
            err_t: None,
            err_alpha: None,
            status,
        }
    }
}

/// Simulate and measure one grid point. Never fails; problems are
/// recorded in the row status.
pub fn run_point(config: &StudyConfig, point: GridPoint) -> StudyRow {
    let params = ModelParams::canonical(config.g_x, point.g_v, point.rho_v1);
    match ramp_run(
        &params,
        point.boundary,
        point.n,
        config.v0,
        config.horizon_factor,
        &config.integrator,
    ) {
        Ok(run) => {
            let p = &run.prediction;
            let m = &run.metrics;
            let err = |meas: Option<f64>, pred: f64| meas.and_then(|v| relative_error(v, pred).ok());
            let a1 = m.first_amplitude();
            let status = if a1.is_some() && m.is_complete() {
                RowStatus::Ok
            } else {
                RowStatus::InsufficientFeatures
            };
            StudyRow {
                point,
                a1_meas: a1,
                a1_pred: Some(p.amplitudes[0]),
                t_meas: m.period,
                t_pred: Some(p.period),
                alpha_meas: m.attenuation,
                alpha_pred: Some(p.attenuation),
                err_a1: err(a1, p.amplitudes[0]),
                err_t: err(m.period, p.period),
                err_alpha: err(m.attenuation, p.attenuation),
                status,
            }
        }
        Err(RunError::Integrate(IntegrateError::Failed(_))) => StudyRow::failed(point, RowStatus::IntegrationFailure),
        Err(_) => StudyRow::failed(point, RowStatus::Invalid),
    }
}

/// Run every grid point on `workers` threads (all available when `None`).
/// Rows come back in grid order whatever the scheduling.
pub fn run_grid(config: &StudyConfig, workers: Option<usize>) -> Vec<StudyRow> {
    let points = config.points();
    let run = || points.par_iter().map(|p| run_point(config, *p)).collect::<Vec<_>>();
    match rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool.install(run),
        Err(_) => points.iter().map(|p| run_point(config, *p)).collect(),
    }
}

pub const STUDY_HEADER: &str =
    "N,boundary,rho_v1,g_v,A1_meas,A1_pred,T_meas,T_pred,alpha_meas,alpha_pred,err_A1,err_T,err_alpha,status";

pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from(STUDY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.point.n,
            r.point.boundary.label(),
            fmt15(r.point.rho_v1),
            fmt15(r.point.g_v),
            fmt_opt(r.a1_meas),
            fmt_opt(r.a1_pred),
            fmt_opt(r.t_meas),
            fmt_opt(r.t_pred),
            fmt_opt(r.alpha_meas),
            fmt_opt(r.alpha_pred),
            fmt_opt(r.err_a1),
            fmt_opt(r.err_t),
            fmt_opt(r.err_alpha),
            r.status.label()
        );
    }
    out
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub boundary: BoundaryKind,
    pub rho_v1: f64,
    pub g_v: f64,
    pub slope_a1: Option<f64>,
    pub slope_t: Option<f64>,
    pub slope_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianSlopes {
    pub a1: Option<f64>,
    pub t: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub rows: Vec<SlopeRow>,
    /// Parameter points with fewer than three usable `N`.
    pub omitted: Vec<(BoundaryKind, f64, f64)>,
    pub median: MedianSlopes,
    /// Medians per boundary kind, in first-seen order.
    pub median_by_boundary: Vec<(BoundaryKind, MedianSlopes)>,
}

/// Minimum number of distinct `N` per parameter point for a slope.
pub const MIN_SLOPE_POINTS: usize = 3;

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len();
    Some(if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    })
}

fn medians<'a>(rows: impl Iterator<Item = &'a SlopeRow> + Clone) -> MedianSlopes {
    let pick = |f: fn(&SlopeRow) -> Option<f64>| {
        let mut v: Vec<f64> = rows.clone().filter_map(f).collect();
        median(&mut v)
    };
    MedianSlopes {
        a1: pick(|r| r.slope_a1),
        t: pick(|r| r.slope_t),
        alpha: pick(|r| r.slope_alpha),
    }
}

/// Per parameter point, the log-log slope of each relative error against
/// `N`, and the medians over the grid.
pub fn convergence_slopes(rows: &[StudyRow]) -> SlopeReport {
    let mut keys: Vec<(BoundaryKind, f64, f64)> = Vec::new();
    for r in rows {
        let k = (r.point.boundary, r.point.rho_v1, r.point.g_v);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = Vec::new();
    let mut omitted = Vec::new();
    for key in keys {
        let group: Vec<&StudyRow> = rows
            .iter()
            .filter(|r| (r.point.boundary, r.point.rho_v1, r.point.g_v) == key)
            .collect();
        let slope_for = |f: fn(&StudyRow) -> Option<f64>| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = group
                .iter()
                .filter_map(|r| f(r).filter(|e| *e > 0.0).map(|e| (r.point.n as f64, e)))
                .unzip();
            let mut distinct = xs.clone();
            distinct.dedup();
            (distinct.len() >= MIN_SLOPE_POINTS).then(|| log_log_slope(&xs, &ys)).flatten()
        };
        let row = SlopeRow {
            boundary: key.0,
            rho_v1: key.1,
            g_v: key.2,
            slope_a1: slope_for(|r| r.err_a1),
            slope_t: slope_for(|r| r.err_t),
            slope_alpha: slope_for(|r| r.err_alpha),
        };
        if row.slope_a1.is_none() && row.slope_t.is_none() && row.slope_alpha.is_none() {
            omitted.push(key);
        } else {
            out.push(row);
        }
    }
    let mut kinds: Vec<BoundaryKind> = Vec::new();
    for r in &out {
        if !kinds.contains(&r.boundary) {
            kinds.push(r.boundary);
        }
    }
    let median_by_boundary = kinds
        .iter()
        .map(|b| (*b, medians(out.iter().filter(|r| r.boundary == *b))))
        .collect();
    SlopeReport {
        median: medians(out.iter()),
        median_by_boundary,
        rows: out,
        omitted,
    }
}

pub const SLOPES_HEADER: &str = "boundary,rho_v1,g_v,slope_A1,slope_T,slope_alpha";

pub fn slopes_csv(report: &SlopeReport) -> String {
    let mut out = String::from(SLOPES_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.boundary.label(),
            fmt15(r.rho_v1),
            fmt15(r.g_v),
            fmt_opt(r.slope_a1),
            fmt_opt(r.slope_t),
            fmt_opt(r.slope_alpha)
        );
    }
    out
}

/// One decimated per-agent sample of the position relative to the leader.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub agent: usize,
    pub position_rel_leader: f64,
}

pub const TRACE_HEADER: &str = "t,agent_index,position_rel_leader";

pub fn trace_csv(points: &[TracePoint]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(out, "{},{},{}", fmt15(p.t), p.agent, fmt15(p.position_rel_leader));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonCase {
    pub rho_v1: f64,
    pub metrics: TransientMetrics,
    pub prediction: TheoryPrediction,
    pub trace: Vec<TracePoint>,
}

/// Settings of the symmetric-versus-asymmetric comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonConfig {
    pub n: usize,
    pub g_x: f64,
    pub g_v: f64,
    pub v0: f64,
    pub rho_v1_cases: Vec<f64>,
    pub horizon_factor: f64,
    /// Keep every `agent_stride`-th agent in the traces.
    pub agent_stride: usize,
    /// Trace samples per agent.
    pub trace_times: usize,
    pub integrator: IntegratorConfig,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            n: 400,
            g_x: -2.0,
            g_v: -2.0,
            v0: 1.0,
            rho_v1_cases: vec![-0.5, 0.0],
            horizon_factor: 4.0,
            agent_stride: 4,
            trace_times: 256,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// Regular-boundary ramp runs for each `ρ_{v,1}` case, with decimated
/// per-agent traces relative to the leader.
pub fn comparison_run(config: &ComparisonConfig) -> Result<Vec<ComparisonCase>, RunError> {
    config
        .rho_v1_cases
        .iter()
        .map(|&rho_v1| {
            let params = ModelParams::canonical(config.g_x, config.g_v, rho_v1);
            let t_end = ramp_horizon(&params, config.n, config.horizon_factor)?;
            let samples = crate::integrator::DEFAULT_SAMPLE_INTERVALS;
            let stride = (samples / config.trace_times.max(1)).max(1);
            let cfg = IntegratorConfig {
                snapshot_stride: Some(stride),
                sample_dt: Some(t_end / samples as f64),
                ..config.integrator
            };
            let traj = simulate_ramp(&params, BoundaryKind::Regular, config.n, config.v0, t_end, &cfg)?;
            let orbit = relative_orbit(&traj)?;
            let leader = LeaderInput::Ramp { v0: config.v0 };
            let mut trace = Vec::new();
            if let Some(snaps) = &traj.snapshots {
                for (t, state) in snaps.times.iter().zip(&snaps.states) {
                    let lead = leader.orbit(*t).0;
                    for agent in (1..=config.n).step_by(config.agent_stride.max(1)) {
                        trace.push(TracePoint {
                            t: *t,
                            agent,
                            position_rel_leader: state[agent - 1] - lead,
                        });
                    }
                }
            }
            Ok(ComparisonCase {
                rho_v1,
                metrics: measure(&orbit),
                prediction: predict(&normalize_stencils(&params)?, config.n, config.v0, PREDICTED_TERMS)?,
                trace,
            })
        })
        .collect()
}

pub const COMPARISON_HEADER: &str = "rho_v1,c_plus,c_minus,A1_meas,A1_pred,T_meas,T_pred,alpha_meas,alpha_pred,I_E";

pub fn comparison_table(cases: &[ComparisonCase]) -> String {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for c in cases {
        let p = &c.prediction;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt15(c.rho_v1),
            fmt15(p.velocities.c_plus),
            fmt15(p.velocities.c_minus),
            fmt_opt(c.metrics.first_amplitude()),
            fmt15(p.amplitudes[0]),
            fmt_opt(c.metrics.period),
            fmt15(p.period),
            fmt_opt(c.metrics.attenuation),
            fmt15(p.attenuation),
            fmt15(p.energy_index)
        );
    }
    out
}

/// Response of the last agent to a unit pulse of the leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseResponse {
    /// Centroid of the first burst at agent `N`.
    pub arrival_time: f64,
    pub arrival_pred: f64,
    /// Time integrals of the bursts, in arrival order.
    pub burst_integrals: Vec<f64>,
    pub burst_integrals_pred: Vec<f64>,
    /// Second-to-first burst integral ratio.
    pub ratio: f64,
    /// `c_-/c_+`.
    pub ratio_pred: f64,
}

/// Drive the array with a raised-cosine pulse of half-width `epsilon` and
/// split the last agent's response into bursts centred on the predicted
/// arrival times `N/c_+ + k·N(1/c_+ - 1/c_-)`.
pub fn pulse_response(
    params: &ModelParams,
    boundary: BoundaryKind,
    n: usize,
    v0: f64,
    epsilon: f64,
    integrator: &IntegratorConfig,
) -> Result<PulseResponse, RunError> {
    let canonical = normalize_stencils(params)?;
    let c = signal_velocities(&canonical)?;
    let nf = n as f64;
    let first = nf / c.c_plus;
    let spacing = c.round_trip() * nf;
    let bursts = 2usize;
    let t0 = -epsilon;
    let t1 = first + (bursts as f64 - 0.5) * spacing;
    let leader = LeaderInput::Pulse {
        v0,
        epsilon,
        shape: PulseShape::RaisedCosine,
    };
    let sys = assemble(*params, boundary, Some(leader), n)?;
    let traj = integrate_adaptive(&sys, (t0, t1), integrator, &vec![0.0; 2 * n])?;
    let z = traj.series("z_N").expect("flock systems record z_N");
    let dt = traj.dt;

    let mut integrals = Vec::with_capacity(bursts);
    let mut arrival = f64::NAN;
    for k in 0..bursts {
        let lo = if k == 0 { t0 } else { first + (k as f64 - 0.5) * spacing };
        let hi = first + (k as f64 + 0.5) * spacing;
        let (mut mass, mut moment) = (0.0, 0.0);
        for i in 0..traj.times.len().saturating_sub(1) {
            let (ta, tb) = (traj.times[i], traj.times[i + 1]);
            let mid = 0.5 * (ta + tb);
            if mid < lo || mid >= hi {
                continue;
            }
            let area = 0.5 * (z[i] + z[i + 1]) * dt;
            mass += area;
            moment += 0.5 * (z[i] * ta + z[i + 1] * tb) * dt;
        }
        if k == 0 {
            arrival = moment / mass;
        }
        integrals.push(mass);
    }
    let gain = (c.c_plus - c.c_minus) / c.c_plus;
    Ok(PulseResponse {
        arrival_time: arrival,
        arrival_pred: first,
        ratio: integrals[1] / integrals[0],
        ratio_pred: c.ratio(),
        burst_integrals_pred: (0..bursts).map(|k| gain * c.ratio().powi(k as i32) * v0).collect(),
        burst_integrals: integrals,
    })
}
