// SPDX-License-Identifier: Apache-2.0

//! Scenario configuration (TOML).
//!
//! Every section is optional; omitted values default to the benchmark
//! parameters `λ = 0.1, ω₀ = 1, ω_c = 3, T_L = 10, T_R = 1, g = 0.3`.
//! Unknown keys are rejected so that typos fail loudly.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::generators::{CrossConvention, NegativeFrequency, TcgOptions};
use crate::model::ChainParams;
use crate::ode::Tolerance;
use crate::quadrature::QuadratureSpec;
use crate::C64;

/// A reduced dynamics selectable in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApproachKind {
    Exact,
    Local,
    Global,
    Tcg,
}

impl ApproachKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Local => "local",
            Self::Global => "global",
            Self::Tcg => "tcg",
        }
    }
}

/// Log-spaced grid `min … max` with `points` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for LogGrid {
    /// 40 points in `[1e−2, 1e4]`.
    fn default() -> Self {
        Self {
            min: 1e-2,
            max: 1e4,
            points: 40,
        }
    }
}

impl LogGrid {
    /// Grid values; the end points are exact.
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let (a, b) = (self.min.log10(), self.max.log10());
        let n = self.points - 1;
        (0..=n)
            .map(|i| match i {
                0 => self.min,
                i if i == n => self.max,
                i => 10f64.powf(a + (b - a) * i as f64 / n as f64),
            })
            .collect()
    }
}

/// TCG settings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcgConfig {
    /// Explicit coarse-graining times; exclusive with `grid`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<Vec<f64>>,
    /// Log-spaced grid; the default grid is used if neither is set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<LogGrid>,
    pub cross_convention: CrossConvention,
    pub negative_frequency: NegativeFrequency,
}

impl TcgConfig {
    pub fn options(&self) -> TcgOptions {
        TcgOptions {
            cross: self.cross_convention,
            negative_frequency: self.negative_frequency,
        }
    }

    /// The coarse-graining times, in ascending order.
    pub fn delta_ts(&self) -> Vec<f64> {
        match (&self.delta_t, &self.grid) {
            (Some(list), _) => list.clone(),
            (None, Some(grid)) => grid.values(),
            (None, None) => LogGrid::default().values(),
        }
    }

    fn is_explicit(&self) -> bool {
        self.delta_t.is_some() || self.grid.is_some()
    }
}

/// Discretization of each bath for the exact reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BathConfig {
    pub modes_per_bath: usize,
    /// `ω_max` in units of `ω_c`.
    pub omega_max_factor: f64,
}

impl Default for BathConfig {
    fn default() -> Self {
        Self {
            modes_per_bath: 512,
            omega_max_factor: 12.0,
        }
    }
}

/// Time evolution settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    /// Horizon; `0` produces header-only outputs.
    pub t_end: f64,
    /// Output sampling step.
    pub step: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Initial coherent displacement `⟨aᵢ⟩` as `[re, im]` pairs; vacuum
    /// otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_displacement: Option<[[f64; 2]; 3]>,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        let tol = Tolerance::default();
        Self {
            t_end: 50.0,
            step: 0.05,
            rtol: tol.rtol,
            atol: tol.atol,
            initial_displacement: None,
        }
    }
}

impl EvolveConfig {
    pub fn tolerance(&self) -> Tolerance {
        Tolerance {
            rtol: self.rtol,
            atol: self.atol,
        }
    }

    /// Uniform sample times `0, step, …` up to `t_end`; empty for a zero
    /// horizon.
    pub fn sample_times(&self) -> Vec<f64> {
        if self.t_end == 0.0 {
            return Vec::new();
        }
        let n = (self.t_end / self.step * (1.0 + 1e-12)).floor() as usize;
        (0..=n).map(|i| i as f64 * self.step).collect()
    }

    pub fn displacement(&self) -> nalgebra::Vector3<C64> {
        let d = self.initial_displacement.unwrap_or([[0.0; 2]; 3]);
        nalgebra::Vector3::from_fn(|i, _| C64::new(d[i][0], d[i][1]))
    }
}

/// Spatial probability-field export during `evolve`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialConfig {
    pub enabled: bool,
    pub points: usize,
    /// Grid half-width in units of the widest marginal standard deviation.
    pub width_sigmas: f64,
    /// Export every `stride`-th trajectory sample.
    pub stride: usize,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            points: 1024,
            width_sigmas: 8.0,
            stride: 10,
        }
    }
}

/// Settings of the `check` invariant suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    /// Time step of the finite-difference continuity checks.
    pub step: f64,
    /// Number of steps of the energy continuity trajectories.
    pub energy_steps: usize,
    /// Coarse-graining time of the TCG trajectory checks.
    pub tcg_delta_t: f64,
    /// Draws of the Monte Carlo moment oracle.
    pub mc_samples: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            energy_steps: 2000,
            tcg_delta_t: 1.0,
            mc_samples: 1_000_000,
        }
    }
}

/// Debugging switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DebugConfig {
    /// Flip the sign of every absorption-rate matrix `Γ⁻`, planting
    /// negative eigenvalues that the positivity checks must catch.
    pub corrupt_gamma_sign: bool,
}

/// A complete scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Seed of every sampling oracle.
    pub seed: u64,
    pub approaches: Vec<ApproachKind>,
    /// Output directory; `--out` takes precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub params: ChainParams,
    pub tcg: TcgConfig,
    pub bath: BathConfig,
    pub evolve: EvolveConfig,
    pub quadrature: QuadratureSpec,
    pub spatial: SpatialConfig,
    pub check: CheckConfig,
    pub debug: DebugConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            approaches: vec![ApproachKind::Local, ApproachKind::Global, ApproachKind::Tcg],
            output_dir: None,
            params: ChainParams::default(),
            tcg: TcgConfig::default(),
            bath: BathConfig::default(),
            evolve: EvolveConfig::default(),
            quadrature: QuadratureSpec::default(),
            spatial: SpatialConfig::default(),
            check: CheckConfig::default(),
            debug: DebugConfig::default(),
        }
    }
}

fn finite_positive(name: &str, v: f64) -> Result<(), String> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} = {v} must be finite and > 0"))
    }
}

impl ScenarioConfig {
    /// Parse and validate a TOML document.
    pub fn from_toml_str(s: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(s).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical TOML serialization; parses back to an equal value.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }

    pub fn has(&self, kind: ApproachKind) -> bool {
        self.approaches.contains(&kind)
    }

    /// Check every cross-field invariant.
    pub fn validate(&self) -> Result<(), String> {
        if self.approaches.is_empty() {
            return Err("at least one approach is required".into());
        }
        let mut seen = self.approaches.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.approaches.len() {
            return Err("approaches must not repeat".into());
        }
        self.params.validate().map_err(|e| e.to_string())?;
        self.quadrature.validate().map_err(|e| e.to_string())?;
        self.evolve.tolerance().validate().map_err(|e| e.to_string())?;
        if self.tcg.is_explicit() && !self.has(ApproachKind::Tcg) {
            return Err("a delta_t grid is given but tcg is not selected".into());
        }
        if self.tcg.delta_t.is_some() && self.tcg.grid.is_some() {
            return Err("give either tcg.delta_t or tcg.grid, not both".into());
        }
        if let Some(grid) = &self.tcg.grid {
            finite_positive("tcg.grid.min", grid.min)?;
            finite_positive("tcg.grid.max", grid.max)?;
            if grid.points == 0 || grid.max < grid.min || (grid.points == 1 && grid.max != grid.min) {
                return Err("tcg.grid needs points ≥ 1 and min ≤ max (min = max for one point)".into());
            }
        }
        let dts = self.tcg.delta_ts();
        if dts.is_empty() {
            return Err("tcg.delta_t must not be empty".into());
        }
        for &dt in &dts {
            finite_positive("tcg delta_t", dt)?;
        }
        if dts.windows(2).any(|w| w[1] <= w[0]) {
            return Err("tcg delta_t values must be strictly increasing".into());
        }
        if self.bath.modes_per_bath == 0 {
            return Err("bath.modes_per_bath must be ≥ 1".into());
        }
        finite_positive("bath.omega_max_factor", self.bath.omega_max_factor)?;
        if !(self.evolve.t_end >= 0.0 && self.evolve.t_end.is_finite()) {
            return Err(format!("evolve.t_end = {} must be finite and ≥ 0", self.evolve.t_end));
        }
        finite_positive("evolve.step", self.evolve.step)?;
        if let Some(d) = &self.evolve.initial_displacement {
            if d.iter().flatten().any(|v| !v.is_finite()) {
                return Err("evolve.initial_displacement must be finite".into());
            }
        }
        if self.spatial.points < 5 {
            return Err("spatial.points must be ≥ 5".into());
        }
        finite_positive("spatial.width_sigmas", self.spatial.width_sigmas)?;
        if self.spatial.stride == 0 {
            return Err("spatial.stride must be ≥ 1".into());
        }
        finite_positive("check.step", self.check.step)?;
        finite_positive("check.tcg_delta_t", self.check.tcg_delta_t)?;
        if self.check.energy_steps < 8 {
            return Err("check.energy_steps must be ≥ 8".into());
        }
        if self.check.mc_samples < 1000 {
            return Err("check.mc_samples must be ≥ 1000".into());
        }
        Ok(())
    }
}
