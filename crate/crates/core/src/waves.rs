//! Counter-propagating pulses on the ring.
//!
//! A smooth bump released at rest on the periodic array splits into a
//! right-moving and a left-moving component. This module tracks both peaks
//! to measure their speeds and fits a two-wave decomposition
//! `z_j(t) ≈ f_-(j - c_- t) + f_+(j - c_+ t)` to quantify how well the
//! travelling-wave picture holds.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{RunError, WaveError};
use crate::integrator::{integrate_adaptive, IntegratorConfig, Snapshots};
use crate::model::{assemble, normalize_stencils, BoundaryKind, ModelParams};
use crate::theory::signal_velocities;

/// Raised-cosine bump of support width `width` centred at `center`
/// (agent index, 1-based), wrapped onto a ring of `n` agents.
pub fn bump_profile(n: usize, width: f64, amplitude: f64, center: f64) -> Vec<f64> {
    let nf = n as f64;
    (1..=n)
        .map(|k| {
            let mut d = (k as f64 - center) % nf;
            if d > nf / 2.0 {
                d -= nf;
            } else if d < -nf / 2.0 {
                d += nf;
            }
            if d.abs() <= width / 2.0 {
                amplitude * (std::f64::consts::PI * d / width).cos().powi(2)
            } else {
                0.0
            }
        })
        .collect()
}

/// Initial state `(z, ż)` for the ring: a bump of width `width` centred at
/// `n/2`, released at rest.
pub fn periodic_initial_condition(n: usize, width: f64, amplitude: f64) -> Result<Vec<f64>, WaveError> {
    if !(width >= 4.0 && width <= n as f64 / 4.0) {
        return Err(WaveError::WidthOutOfRange { w: width, n });
    }
    let mut state = bump_profile(n, width, amplitude, n as f64 / 2.0);
    state.extend(std::iter::repeat_n(0.0, n));
    Ok(state)
}

/// Default bump width: a tenth of the ring. Dispersion distorts the pulses
/// on the scale `t/w²`, so keeping `w ∝ N` makes the residual fall like
/// `1/N` while the velocities are width-independent.
pub fn default_width(n: usize) -> f64 {
    (n as f64 / 10.0).clamp(4.0, n as f64 / 4.0)
}

/// Time interval of snapshots used for tracking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveWindow {
    pub t_start: f64,
    pub t_end: f64,
}

impl WaveWindow {
    /// From the time the two pulses have separated by one and a half widths
    /// until the faster one has covered 40% of the ring.
    pub fn for_velocities(n: usize, width: f64, c_plus: f64, c_minus: f64) -> Self {
        let fastest = c_plus.abs().max(c_minus.abs());
        Self {
            t_start: 1.5 * width / (c_plus - c_minus),
            t_end: 0.4 * n as f64 / fastest,
        }
    }

    fn select<'a>(&self, snaps: &'a Snapshots) -> Vec<(f64, &'a [f64])> {
        snaps
            .times
            .iter()
            .zip(&snaps.states)
            .filter(|(t, _)| **t >= self.t_start - 1e-9 && **t <= self.t_end + 1e-9)
            .map(|(t, s)| (*t, s.as_slice()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseTracks {
    pub times: Vec<f64>,
    pub plus_positions: Vec<f64>,
    pub minus_positions: Vec<f64>,
    pub c_plus: f64,
    pub c_minus: f64,
}

fn parabola_offset(a: f64, b: f64, c: f64) -> f64 {
    let curv = a - 2.0 * b + c;
    if curv == 0.0 {
        0.0
    } else {
        (0.5 * (a - c) / curv).clamp(-0.5, 0.5)
    }
}

/// Positions (0-based agent coordinate) of the two pulse peaks in one
/// snapshot, ordered `(left, right)`.
fn locate_peaks(z: &[f64], t: f64) -> Result<(f64, f64), WaveError> {
    let n = z.len();
    let first = (0..n).max_by(|&a, &b| z[a].total_cmp(&z[b])).expect("non-empty");
    let mut lo = first;
    while lo > 0 && z[lo - 1] <= z[lo] {
        lo -= 1;
    }
    let mut hi = first;
    while hi + 1 < n && z[hi + 1] <= z[hi] {
        hi += 1;
    }
    let second = (0..n)
        .filter(|&i| i < lo || i > hi)
        .max_by(|&a, &b| z[a].total_cmp(&z[b]))
        .ok_or(WaveError::Overlapping(t))?;
    let is_local_max = second > 0 && second + 1 < n && z[second] >= z[second - 1] && z[second] >= z[second + 1];
    if !is_local_max || z[second] <= 1e-3 * z[first] {
        return Err(WaveError::Overlapping(t));
    }
    for p in [first, second] {
        if p < 2 || p + 2 >= n {
            return Err(WaveError::Wrapped(t));
        }
    }
    let refine = |p: usize| p as f64 + parabola_offset(z[p - 1], z[p], z[p + 1]);
    let (a, b) = (refine(first), refine(second));
    Ok(if a < b { (a, b) } else { (b, a) })
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Least-squares speeds of the right- and left-moving peaks over the
/// snapshots inside `window`.
pub fn track_pulses(snapshots: &Snapshots, n: usize, window: &WaveWindow) -> Result<PulseTracks, WaveError> {
    let chosen = window.select(snapshots);
    if chosen.len() < 20 {
        return Err(WaveError::TooFewSnapshots(chosen.len()));
    }
    let mut times = Vec::with_capacity(chosen.len());
    let mut left = Vec::with_capacity(chosen.len());
    let mut right = Vec::with_capacity(chosen.len());
    for (t, state) in chosen {
        let (l, r) = locate_peaks(&state[..n], t)?;
        times.push(t);
        left.push(l);
        right.push(r);
    }
    Ok(PulseTracks {
        c_plus: slope(&times, &right),
        c_minus: slope(&times, &left),
        times,
        plus_positions: right,
        minus_positions: left,
    })
}

/// Sup-norm misfit, relative to `amplitude`, of the least-squares two-wave
/// fit `f_-(j - c_- t) + f_+(j - c_+ t)` over the snapshots in `window`.
///
/// On the ring both profiles are periodic, so the fit decouples into one
/// 2×2 complex least-squares problem per Fourier mode. The mean is
/// attributed to `f_-`.
pub fn wave_residual(
    snapshots: &Snapshots,
    n: usize,
    window: &WaveWindow,
    c_plus: f64,
    c_minus: f64,
    amplitude: f64,
) -> Result<f64, WaveError> {
    let chosen = window.select(snapshots);
    if chosen.len() < 2 {
        return Err(WaveError::WindowTooShort);
    }
    let span = chosen.last().expect("non-empty").0 - chosen[0].0;
    if (c_plus - c_minus).abs() * span < 1.0 {
        return Err(WaveError::WindowTooShort);
    }

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);

    let spectra: Vec<Vec<Complex<f64>>> = chosen
        .iter()
        .map(|(_, s)| {
            let mut buf: Vec<Complex<f64>> = s[..n].iter().map(|&v| Complex::new(v, 0.0)).collect();
            forward.process(&mut buf);
            buf
        })
        .collect();

    let count = chosen.len() as f64;
    let phase = |k: usize, c: f64, t: f64| {
        let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        Complex::from_polar(1.0, -2.0 * PI * signed * c * t / n as f64)
    };
    let mut f_plus = vec![Complex::new(0.0, 0.0); n];
    let mut f_minus = vec![Complex::new(0.0, 0.0); n];
    for k in 0..n {
        let mut cross = Complex::new(0.0, 0.0);
        let mut rhs_p = Complex::new(0.0, 0.0);
        let mut rhs_m = Complex::new(0.0, 0.0);
        for ((t, _), z) in chosen.iter().zip(&spectra) {
            let a = phase(k, c_plus, *t);
            let b = phase(k, c_minus, *t);
            cross += a.conj() * b;
            rhs_p += a.conj() * z[k];
            rhs_m += b.conj() * z[k];
        }
        let det = count * count - cross.norm_sqr();
        if k == 0 || det <= 1e-12 * count * count {
            f_minus[k] = rhs_m / count;
        } else {
            f_plus[k] = (rhs_p * count - cross * rhs_m) / det;
            f_minus[k] = (rhs_m * count - cross.conj() * rhs_p) / det;
        }
    }

    let mut worst = 0.0f64;
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for (t, state) in &chosen {
        for k in 0..n {
            buf[k] = f_plus[k] * phase(k, c_plus, *t) + f_minus[k] * phase(k, c_minus, *t);
        }
        inverse.process(&mut buf);
        for j in 0..n {
            worst = worst.max((state[j] - buf[j].re / n as f64).abs());
        }
    }
    Ok(worst / amplitude.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveCheckReport {
    pub n: usize,
    pub width: f64,
    pub c_plus_emp: f64,
    pub c_minus_emp: f64,
    pub c_plus_pred: f64,
    pub c_minus_pred: f64,
    pub err_c_plus: f64,
    pub err_c_minus: f64,
    pub residual: f64,
    pub window: WaveWindow,
    pub snapshots: usize,
}

/// Snapshots per tracking window in [`wave_check`].
pub const WAVE_SNAPSHOTS: usize = 120;

/// Release a bump on the ring, track its two components and fit the
/// two-wave decomposition. Parameters must satisfy the necessary
/// stability conditions; stencils are normalized first.
pub fn wave_check(
    params: &ModelParams,
    n: usize,
    width: f64,
    amplitude: f64,
    integrator: &IntegratorConfig,
) -> Result<WaveCheckReport, RunError> {
    let canonical = normalize_stencils(params)?;
    let c = signal_velocities(&canonical)?;
    let system = assemble(*params, BoundaryKind::Periodic, None, n)?;
    let state = periodic_initial_condition(n, width, amplitude)?;
    let window = WaveWindow::for_velocities(n, width, c.c_plus, c.c_minus);
    if window.t_start >= window.t_end {
        return Err(WaveError::WindowTooShort.into());
    }
    let sample_dt = (window.t_end - window.t_start) / WAVE_SNAPSHOTS as f64;
    let cfg = IntegratorConfig {
        sample_dt: Some(sample_dt),
        snapshot_stride: Some(1),
        ..*integrator
    };
    let traj = integrate_adaptive(&system, (0.0, window.t_end), &cfg, &state)?;
    let snaps = traj.snapshots.as_ref().ok_or(WaveError::NoSnapshots)?;
    let tracks = track_pulses(snaps, n, &window)?;
    let residual = wave_residual(snaps, n, &window, c.c_plus, c.c_minus, amplitude)?;
    let rel = |m: f64, p: f64| (m - p).abs() / p.abs();
    Ok(WaveCheckReport {
        n,
        width,
        c_plus_emp: tracks.c_plus,
        c_minus_emp: tracks.c_minus,
        c_plus_pred: c.c_plus,
        c_minus_pred: c.c_minus,
        err_c_plus: rel(tracks.c_plus, c.c_plus),
        err_c_minus: rel(tracks.c_minus, c.c_minus),
        residual,
        window,
        snapshots: tracks.times.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dft_magnitudes(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..=n / 2)
            .map(|m| {
                let (mut re, mut im) = (0.0, 0.0);
                for (k, v) in x.iter().enumerate() {
                    let ph = -2.0 * std::f64::consts::PI * (m * k) as f64 / n as f64;
                    re += v * ph.cos();
                    im += v * ph.sin();
                }
                (re * re + im * im).sqrt() / n as f64
            })
            .collect()
    }

    #[test]
    fn width_bounds() {
        assert!(periodic_initial_condition(100, 3.9, 1.0).is_err());
        assert!(periodic_initial_condition(100, 25.0, 1.0).is_ok());
        assert!(matches!(
            periodic_initial_condition(100, 51.0, 1.0),
            Err(WaveError::WidthOutOfRange { .. })
        ));
        let s = periodic_initial_condition(64, 8.0, 1.0).unwrap();
        assert_eq!(s.len(), 128);
        assert!(s[64..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bump_mass_is_translation_invariant() {
        let total = |c: f64| bump_profile(200, 16.0, 1.0, c).iter().sum::<f64>();
        let reference = total(100.0);
        // integer shifts, including across the seam
        for c in [3.0, 57.0, 100.0, 199.0] {
            assert!((total(c) - reference).abs() < 1e-12);
        }
        assert!((reference - 8.0).abs() < 1e-12);
    }

    #[test]
    fn bump_spectrum_decays_at_least_quadratically() {
        let n = 512;
        let w = 32.0;
        let a = dft_magnitudes(&bump_profile(n, w, 1.0, n as f64 / 2.0));
        // C measured over the main lobe and first side lobe (m ≤ 2n/w); the
        // bound must then hold up to m = n/2
        let band = 2 * n / w as usize;
        let c = (1..=band).map(|m| a[m] * (m * m) as f64).fold(0.0, f64::max);
        for (m, am) in a.iter().enumerate().skip(1) {
            assert!(*am <= c / (m * m) as f64 + 1e-15, "m={m}");
        }
        // and the tail actually falls faster than 1/m²
        let tail = (n / 4..=n / 2).map(|m| a[m] * (m * m) as f64).fold(0.0, f64::max);
        assert!(tail < 0.1 * c);
    }

    fn synthetic(n: usize, times: &[f64], f: impl Fn(f64, f64) -> f64) -> Snapshots {
        Snapshots {
            times: times.to_vec(),
            states: times
                .iter()
                .map(|&t| {
                    let mut s: Vec<f64> = (0..n).map(|j| f(j as f64, t)).collect();
                    s.extend(std::iter::repeat_n(0.0, n));
                    s
                })
                .collect(),
        }
    }

    fn smooth_ring_profile(n: usize, x: f64) -> f64 {
        let th = 2.0 * std::f64::consts::PI * x / n as f64;
        (2.0 * th.cos()).exp() / 2f64.exp() + 0.3 * (3.0 * th).sin()
    }

    #[test]
    fn single_exact_wave_has_tiny_residual() {
        let n = 400;
        let c = 1.3;
        let times: Vec<f64> = (0..40).map(|i| 10.0 + 1.7 * i as f64).collect();
        let snaps = synthetic(n, &times, |j, t| smooth_ring_profile(n, j - c * t));
        let window = WaveWindow {
            t_start: 0.0,
            t_end: 1e3,
        };
        let r = wave_residual(&snaps, n, &window, c, -0.4, 1.0).unwrap();
        assert!(r < 1e-6, "residual {r}");
    }

    #[test]
    fn two_exact_waves_are_separated() {
        let n = 400;
        let (cp, cm) = (2.0, -0.5);
        let times: Vec<f64> = (0..60).map(|i| 2.0 * i as f64).collect();
        let snaps = synthetic(n, &times, |j, t| {
            bump_like(n, j - cp * t, 150.0) * 0.3 + bump_like(n, j - cm * t, 250.0)
        });
        let window = WaveWindow {
            t_start: 0.0,
            t_end: 1e3,
        };
        let r = wave_residual(&snaps, n, &window, cp, cm, 1.0).unwrap();
        assert!(r < 1e-3, "residual {r}");
        let wrong = wave_residual(&snaps, n, &window, 1.5 * cp, cm, 1.0).unwrap();
        assert!(wrong > 10.0 * r);
    }

    fn bump_like(n: usize, x: f64, centre: f64) -> f64 {
        let mut d = (x - centre).rem_euclid(n as f64);
        if d > n as f64 / 2.0 {
            d -= n as f64;
        }
        (-(d / 12.0).powi(2)).exp()
    }

    #[test]
    fn tracking_recovers_synthetic_speeds() {
        let n = 600;
        let times: Vec<f64> = (0..30).map(|i| 20.0 + 2.0 * i as f64).collect();
        let snaps = synthetic(n, &times, |j, t| {
            0.2 * bump_like(n, j - 1.8 * t, 300.0) + bump_like(n, j + 0.6 * t, 300.0)
        });
        let window = WaveWindow {
            t_start: 0.0,
            t_end: 1e3,
        };
        let tr = track_pulses(&snaps, n, &window).unwrap();
        assert!((tr.c_plus - 1.8).abs() < 1e-3);
        assert!((tr.c_minus + 0.6).abs() < 1e-3);
    }

    #[test]
    fn tracking_rejects_overlap_and_short_windows() {
        let n = 600;
        let times: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let snaps = synthetic(n, &times, |j, t| {
            0.2 * bump_like(n, j - 1.8 * t, 300.0) + bump_like(n, j + 0.6 * t, 300.0)
        });
        let window = WaveWindow {
            t_start: 0.0,
            t_end: 1e3,
        };
        assert!(matches!(track_pulses(&snaps, n, &window), Err(WaveError::Overlapping(_))));
        let few = WaveWindow {
            t_start: 0.0,
            t_end: 1.0,
        };
        assert!(matches!(track_pulses(&snaps, n, &few), Err(WaveError::TooFewSnapshots(11))));
        let brief = WaveWindow {
            t_start: 0.0,
            t_end: 0.3,
        };
        assert!(matches!(
            wave_residual(&snaps, n, &brief, 1.8, -0.6, 1.0),
            Err(WaveError::WindowTooShort)
        ));
    }
}
