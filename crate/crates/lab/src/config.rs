//! Experiment configuration: a TOML file with `[shape]`, `[body]`,
//! `[vorticity]` and `[run]` sections.

use serde::{Deserialize, Serialize};
use smallbody_core::biotsavart::PatchSpec;
use smallbody_core::geometry::{build_mesh, ShapeSpec};
use smallbody_core::potential::GenuineMass;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ShapePreset {
    Disk { radius: f64 },
    Ellipse { a: f64, b: f64 },
    /// Radial modes (k, a_k, b_k) with k ≥ 1.
    PerturbedDisk { radius: f64, modes: Vec<(i32, f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeConfig {
    pub preset: ShapePreset,
    pub panels: usize,
    #[serde(default)]
    pub mass_offset: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitialKeyword {
    #[serde(rename = "well-prepared")]
    WellPrepared,
}

/// ℓ₀ as an explicit vector or `"well-prepared"`, meaning ℓ₀ = K_ℝ²[w₀](0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialVelocity {
    Value([f64; 2]),
    Keyword(InitialKeyword),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    pub m1: f64,
    pub j1: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub ell0: InitialVelocity,
    #[serde(default)]
    pub r0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VorticityConfig {
    pub spacing: f64,
    pub delta: f64,
    #[serde(default)]
    pub patches: Vec<PatchSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Strictly decreasing body sizes.
    pub eps: Vec<f64>,
    pub t_final: f64,
    /// Step of the limit system and upper bound for the coupled steps.
    pub dt: f64,
    /// Coupled runs use dt_ε = min(dt, cfl ε²), shortened to divide `record_interval`.
    pub cfl: f64,
    pub record_interval: f64,
    /// Evaluate the conserved energy at every record.
    #[serde(default)]
    pub energy: bool,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Seed for the randomized checks of `check-identities`.
    #[serde(default)]
    pub seed: u64,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub shape: ShapeConfig,
    pub body: BodyConfig,
    pub vorticity: VorticityConfig,
    pub run: RunConfig,
}

/// Time step and counts of a run with records on a fixed cadence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub dt: f64,
    pub steps: usize,
    pub record_every: usize,
}

impl StepPlan {
    /// Largest step ≤ `max_dt` that divides `interval`, over `t_final`.
    pub fn new(max_dt: f64, interval: f64, t_final: f64) -> Self {
        let record_every = (interval / max_dt).ceil().max(1.0) as usize;
        let dt = interval / record_every as f64;
        let steps = (t_final / interval).round() as usize * record_every;
        StepPlan { dt, steps, record_every }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn shape_spec(&self) -> Result<ShapeSpec, ConfigError> {
        let base = match &self.shape.preset {
            ShapePreset::Disk { radius } => ShapeSpec::disk(*radius),
            ShapePreset::Ellipse { a, b } => ShapeSpec::ellipse(*a, *b),
            ShapePreset::PerturbedDisk { radius, modes } => ShapeSpec::perturbed_disk(*radius, modes),
        }
        .map_err(|e| invalid(format!("shape: {e}")))?;
        if self.shape.mass_offset == [0.0, 0.0] {
            Ok(base)
        } else {
            base.with_mass_offset(self.shape.mass_offset).map_err(|e| invalid(format!("shape: {e}")))
        }
    }

    pub fn genuine(&self) -> GenuineMass {
        GenuineMass { m1: self.body.m1, j1: self.body.j1 }
    }

    pub fn coupled_plan(&self, eps: f64) -> StepPlan {
        StepPlan::new(self.run.dt.min(self.run.cfl * eps * eps), self.run.record_interval, self.run.t_final)
    }

    pub fn limit_plan(&self) -> StepPlan {
        StepPlan::new(self.run.dt, self.run.record_interval, self.run.t_final)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = [
            ("body.m1", self.body.m1),
            ("body.j1", self.body.j1),
            ("body.alpha", self.body.alpha),
            ("body.gamma", self.body.gamma),
            ("body.r0", self.body.r0),
            ("vorticity.spacing", self.vorticity.spacing),
            ("vorticity.delta", self.vorticity.delta),
            ("run.t_final", self.run.t_final),
            ("run.dt", self.run.dt),
            ("run.cfl", self.run.cfl),
            ("run.record_interval", self.run.record_interval),
            ("shape.mass_offset[0]", self.shape.mass_offset[0]),
            ("shape.mass_offset[1]", self.shape.mass_offset[1]),
        ];
        if let Some((name, v)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(format!("{name} = {v} is not finite")));
        }
        if let InitialVelocity::Value(v) = self.body.ell0 {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(invalid("body.ell0 is not finite"));
            }
        }
        let positive = [
            ("body.m1", self.body.m1),
            ("body.j1", self.body.j1),
            ("body.alpha", self.body.alpha),
            ("vorticity.spacing", self.vorticity.spacing),
            ("vorticity.delta", self.vorticity.delta),
            ("run.t_final", self.run.t_final),
            ("run.dt", self.run.dt),
            ("run.cfl", self.run.cfl),
            ("run.record_interval", self.run.record_interval),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(invalid(format!("{name} = {v} must be positive")));
        }
        if self.shape.panels < 8 {
            return Err(invalid(format!("shape.panels = {} is below 8", self.shape.panels)));
        }
        let records = self.run.t_final / self.run.record_interval;
        if (records - records.round()).abs() > 1e-9 * records.max(1.0) || records.round() < 1.0 {
            return Err(invalid("run.t_final must be a positive multiple of run.record_interval"));
        }
        let eps = &self.run.eps;
        if eps.is_empty() {
            return Err(invalid("run.eps is empty"));
        }
        if let Some(e) = eps.iter().find(|e| !(e.is_finite() && **e > 0.0 && **e <= 1.0)) {
            return Err(invalid(format!("run.eps entry {e} is outside (0, 1]")));
        }
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("run.eps must be strictly decreasing"));
        }
        for p in &self.vorticity.patches {
            let ok = match *p {
                PatchSpec::Disk { center, radius, density } => {
                    center.iter().all(|c| c.is_finite()) && radius > 0.0 && density.is_finite()
                }
                PatchSpec::Annulus { center, inner, outer, density } => {
                    center.iter().all(|c| c.is_finite()) && inner >= 0.0 && outer > inner && density.is_finite()
                }
            };
            if !ok {
                return Err(invalid(format!("bad patch {p:?}")));
            }
        }
        let shape = self.shape_spec()?;
        let mesh = build_mesh(&shape, self.shape.panels).map_err(|e| invalid(format!("shape: {e}")))?;
        let reach = eps[0] * mesh.circumradius();
        for p in &self.vorticity.patches {
            let gap = patch_gap_to_origin(p);
            if gap <= reach {
                return Err(invalid(format!(
                    "patch {p:?} comes within {gap:.4} of the origin, inside the largest body (radius {reach:.4})"
                )));
            }
        }
        Ok(())
    }
}

/// Distance from the origin to the support of a patch.
pub fn patch_gap_to_origin(p: &PatchSpec) -> f64 {
    match *p {
        PatchSpec::Disk { center, radius, .. } => (center[0].hypot(center[1]) - radius).max(0.0),
        PatchSpec::Annulus { center, inner, outer, .. } => {
            let d = center[0].hypot(center[1]);
            if d < inner {
                inner - d
            } else {
                (d - outer).max(0.0)
            }
        }
    }
}
