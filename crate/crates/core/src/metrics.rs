//! Transient features of a sampled relative orbit: equilibrium crossings,
//! signed extrema, period and attenuation.

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::integrator::Trajectory;

/// Extrema smaller than this fraction of `max|y|` are treated as ripple.
pub const RIPPLE_FRACTION: f64 = 1e-4;

/// A trailing lobe must reach this fraction of the last extremum for the
/// crossing into it to count.
pub const TAIL_LOBE_FRACTION: f64 = 1e-2;

/// A series on the uniform grid `t0 + i·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Self {
        Self { t0, dt, values }
    }

    pub fn from_fn(t0: f64, dt: f64, len: usize, f: impl Fn(f64) -> f64) -> Self {
        Self::new(t0, dt, (0..len).map(|i| f(t0 + i as f64 * dt)).collect())
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `z_N - z_0` from a trajectory of the ramp- or pulse-driven array.
pub fn relative_orbit(traj: &Trajectory) -> Result<Series, MetricsError> {
    let last = traj.series("z_N").ok_or(MetricsError::MissingObservable("z_N"))?;
    let lead = traj.series("z_0").ok_or(MetricsError::MissingObservable("z_0"))?;
    Ok(Series::new(
        traj.t0,
        traj.dt,
        last.iter().zip(lead).map(|(a, b)| a - b).collect(),
    ))
}

/// Zero crossings located by sign change and linear interpolation.
/// Crossings within one sample of the start are skipped.
pub fn find_crossings(y: &Series) -> Vec<f64> {
    let mut out = Vec::new();
    // last nonzero sample: (index, value)
    let mut prev: Option<(usize, f64)> = None;
    for (i, &v) in y.values.iter().enumerate() {
        if v == 0.0 || !v.is_finite() {
            continue;
        }
        if let Some((j, u)) = prev {
            if (u < 0.0) != (v < 0.0) {
                let t = if j + 1 == i {
                    let frac = u / (u - v);
                    y.time(j) + frac * y.dt
                } else {
                    // run of exact zeros between j and i
                    0.5 * (y.time(j + 1) + y.time(i - 1))
                };
                if t >= y.t0 + y.dt {
                    out.push(t);
                }
            }
        }
        prev = Some((i, v));
    }
    out
}

/// Signed extremum refined by a parabola through the peak sample and its
/// neighbours: `(time, value)`.
fn refine_peak(y: &Series, i: usize) -> (f64, f64) {
    if i == 0 || i + 1 >= y.len() {
        return (y.time(i), y.values[i]);
    }
    let (a, b, c) = (y.values[i - 1], y.values[i], y.values[i + 1]);
    let curv = a - 2.0 * b + c;
    if curv == 0.0 {
        return (y.time(i), b);
    }
    let offset = (0.5 * (a - c) / curv).clamp(-1.0, 1.0);
    (y.time(i) + offset * y.dt, b - 0.25 * (a - c) * offset)
}

/// One extremum per segment between consecutive crossings (plus the
/// segment before the first one): values and times. Segments whose peak
/// sits on the last sample are still rising and are not reported, and
/// peaks below the ripple threshold are dropped.
pub fn find_extrema(y: &Series) -> (Vec<f64>, Vec<f64>) {
    let crossings = find_crossings(y);
    extrema_between(y, &crossings)
}

fn extrema_between(y: &Series, crossings: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let max_abs = y.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = RIPPLE_FRACTION * max_abs;
    let index_after = |t: f64| (((t - y.t0) / y.dt).floor() as isize + 1).clamp(0, n as isize) as usize;

    let mut bounds = vec![0usize];
    bounds.extend(crossings.iter().map(|&t| index_after(t)));
    bounds.push(n);

    let mut values = Vec::new();
    let mut times = Vec::new();
    for w in bounds.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let (imax, vmax) = (lo..hi)
            .map(|i| (i, y.values[i]))
            .fold((lo, 0.0f64), |acc, (i, v)| if v.abs() > acc.1.abs() { (i, v) } else { acc });
        if vmax.abs() < threshold || vmax == 0.0 {
            continue;
        }
        if imax + 1 == n && hi == n {
            continue;
        }
        let (t, v) = refine_peak(y, imax);
        values.push(v);
        times.push(t);
    }
    (values, times)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientMetrics {
    pub amplitudes: Vec<f64>,
    pub t_extrema: Vec<f64>,
    pub t_cross: Vec<f64>,
    /// Mean of `T_{k+2} - T_k`; absent with fewer than three crossings.
    pub period: Option<f64>,
    /// `A_3/A_1`; absent with fewer than three extrema.
    pub attenuation: Option<f64>,
}

impl TransientMetrics {
    pub fn first_amplitude(&self) -> Option<f64> {
        self.amplitudes.first().copied()
    }

    pub fn is_complete(&self) -> bool {
        self.period.is_some() && self.attenuation.is_some()
    }
}

pub fn summarize(amplitudes: &[f64], t_cross: &[f64]) -> TransientMetrics {
    let period = (t_cross.len() >= 3).then(|| {
        let gaps: Vec<f64> = t_cross.windows(3).map(|w| w[2] - w[0]).collect();
        gaps.iter().sum::<f64>() / gaps.len() as f64
    });
    let attenuation = (amplitudes.len() >= 3).then(|| amplitudes[2] / amplitudes[0]);
    TransientMetrics {
        amplitudes: amplitudes.to_vec(),
        t_extrema: Vec::new(),
        t_cross: t_cross.to_vec(),
        period,
        attenuation,
    }
}

/// Full pipeline from a relative orbit to metrics. Crossings are reduced
/// to one per sign change of the retained extrema, so that ripple around
/// zero between the extrema does not count as a crossing.
pub fn measure(y: &Series) -> TransientMetrics {
    let crossings = find_crossings(y);
    let (raw_values, raw_times) = extrema_between(y, &crossings);
    // neighbours on the same side were split by dropped ripple; keep the larger
    let mut values: Vec<f64> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    for (v, t) in raw_values.into_iter().zip(raw_times) {
        match values.last_mut() {
            Some(prev) if (*prev < 0.0) == (v < 0.0) => {
                if v.abs() > prev.abs() {
                    *prev = v;
                    *times.last_mut().expect("paired") = t;
                }
            }
            _ => {
                values.push(v);
                times.push(t);
            }
        }
    }
    let mut kept = Vec::new();
    for k in 0..values.len().saturating_sub(1) {
        if (values[k] < 0.0) == (values[k + 1] < 0.0) {
            continue;
        }
        let (lo, hi) = (times[k], times[k + 1]);
        let steepest = crossings
            .iter()
            .copied()
            .filter(|&t| t > lo && t < hi)
            .max_by(|a, b| slope_at(y, *a).total_cmp(&slope_at(y, *b)));
        kept.extend(steepest);
    }
    // The crossing after the last retained extremum counts when the lobe
    // that follows it is a real (if sub-threshold) swing to the other side.
    if let (Some(&last_t), Some(&last_v)) = (times.last(), values.last()) {
        let mut after = crossings.iter().copied().filter(|&t| t > last_t);
        if let Some(t) = after.next() {
            let stop = after.next().unwrap_or(f64::INFINITY);
            let lobe = y
                .values
                .iter()
                .enumerate()
                .filter(|(i, _)| y.time(*i) > t && y.time(*i) < stop)
                .map(|(_, v)| *v)
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            if (lobe < 0.0) != (last_v < 0.0) && lobe.abs() >= TAIL_LOBE_FRACTION * last_v.abs() {
                kept.push(t);
            }
        }
    }
    let mut m = summarize(&values, &kept);
    m.t_extrema = times;
    m
}

fn slope_at(y: &Series, t: f64) -> f64 {
    let i = (((t - y.t0) / y.dt).floor().max(0.0) as usize).min(y.len().saturating_sub(2));
    (y.values[i + 1] - y.values[i]).abs()
}

/// `|measured - predicted| / |predicted|`.
pub fn relative_error(measured: f64, predicted: f64) -> Result<f64, MetricsError> {
    if predicted == 0.0 {
        return Err(MetricsError::ZeroPrediction);
    }
    Ok((measured - predicted).abs() / predicted.abs())
}
