//! TOML run configuration. Every section is optional; unknown keys are
//! rejected.

use std::path::Path;

use flock_core::experiments::StudyConfig;
use flock_core::model::Stencil;
use flock_core::{BoundaryKind, IntegratorConfig, LeaderInput, ModelParams};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub boundary: Option<BoundaryKind>,
    pub leader: Option<LeaderInput>,
    pub run: RunSection,
    pub integrator: IntegratorConfig,
    pub study: StudySection,
    pub wave: WaveSection,
    pub optimize: OptimizeSection,
}

/// Gains plus either the canonical shorthand `rho_v1` or explicit
/// three-point stencils `[back, center, front]`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub g_x: f64,
    pub g_v: f64,
    pub rho_v1: Option<f64>,
    pub rho_x: Option<[f64; 3]>,
    pub rho_v: Option<[f64; 3]>,
    pub n: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            g_x: -1.0,
            g_v: -1.0,
            rho_v1: None,
            rho_x: None,
            rho_v: None,
            n: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Duration in units of `N(1/c_+ - 1/c_-)`; ignored when `t_end` is set.
    pub horizon_factor: f64,
    pub t_end: Option<f64>,
    /// Number of predicted extrema and crossings.
    pub terms: usize,
    /// Keep every `trace_stride`-th sample in `--full-trace` output.
    pub trace_stride: usize,
    /// Keep every `trace_agent_stride`-th agent in trace output.
    pub trace_agent_stride: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            horizon_factor: 4.0,
            t_end: None,
            terms: 6,
            trace_stride: 16,
            trace_agent_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub n_list: Vec<usize>,
    pub boundaries: Vec<BoundaryKind>,
    pub rho_v1_list: Vec<f64>,
    pub g_v_list: Vec<f64>,
    pub g_x: f64,
    pub v0: f64,
    pub horizon_factor: f64,
}

impl Default for StudySection {
    fn default() -> Self {
        let d = StudyConfig::default();
        Self {
            n_list: d.n_list,
            boundaries: d.boundaries,
            rho_v1_list: d.rho_v1_list,
            g_v_list: d.g_v_list,
            g_x: d.g_x,
            v0: d.v0,
            horizon_factor: d.horizon_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveSection {
    pub n: usize,
    /// Bump width in agents; `N/10` when absent.
    pub width: Option<f64>,
    pub amplitude: f64,
}

impl Default for WaveSection {
    fn default() -> Self {
        Self {
            n: 1000,
            width: None,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeSection {
    pub lo: f64,
    pub hi: f64,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self { lo: -0.5, hi: 0.0 }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn params(&self) -> Result<ModelParams, String> {
        let m = &self.model;
        let rho_x = m.rho_x.map_or(Stencil::new(-0.5, 1.0, -0.5), |s| Stencil::new(s[0], s[1], s[2]));
        let rho_v = match (m.rho_v1, m.rho_v) {
            (Some(_), Some(_)) => return Err("model: give either rho_v1 or rho_v, not both".into()),
            (Some(r), None) => Stencil::from_front(r),
            (None, Some(s)) => Stencil::new(s[0], s[1], s[2]),
            (None, None) => Stencil::from_front(0.0),
        };
        let p = ModelParams {
            g_x: m.g_x,
            g_v: m.g_v,
            rho_x,
            rho_v,
        };
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }

    pub fn boundary(&self) -> BoundaryKind {
        self.boundary.unwrap_or(BoundaryKind::Regular)
    }

    pub fn leader(&self) -> LeaderInput {
        self.leader.unwrap_or(LeaderInput::Ramp { v0: 1.0 })
    }

    pub fn study(&self, include_n3200: bool) -> StudyConfig {
        let s = &self.study;
        StudyConfig {
            n_list: s
                .n_list
                .iter()
                .copied()
                .filter(|&n| include_n3200 || n != 3200)
                .collect(),
            boundaries: s.boundaries.clone(),
            rho_v1_list: s.rho_v1_list.clone(),
            g_v_list: s.g_v_list.clone(),
            g_x: s.g_x,
            v0: s.v0,
            horizon_factor: s.horizon_factor,
            integrator: self.integrator,
        }
    }
}
