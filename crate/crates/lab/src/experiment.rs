//! Runs the coupled system for each ε of a configuration and the limit
//! system once, from the same initial vorticity.

use crate::config::{ConfigError, ExperimentConfig, InitialVelocity, StepPlan};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallbody_core::biotsavart::{lattice_fill, velocity_free_space, BlobField, Frame};
use smallbody_core::coupled_system::{
    init_coupled_with, run_coupled, Abort, CoupledError, CoupledParams, CoupledRun, RunOptions,
};
use smallbody_core::geometry::V2;
use smallbody_core::limit_system::{run_limit, LimitError, LimitRun, VortexWaveState};
use smallbody_core::normal_form::{modulated_energy_bound, normal_form_residual, rotated_mass_identity_check, StructureTensors};
use smallbody_core::potential::{PotentialError, PotentialSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("potential solve failed: {0}")]
    Potential(#[from] PotentialError),
    #[error("coupled system setup failed at ε = {eps}: {source}")]
    CoupledSetup { eps: f64, source: CoupledError },
    #[error("limit system setup failed: {0}")]
    LimitSetup(LimitError),
    #[error("initial vorticity: {0}")]
    Vorticity(String),
    #[error("output: {0}")]
    Output(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("comparison: {0}")]
    Compare(#[from] crate::compare::CompareError),
}

impl LabError {
    /// Configuration problems exit with 1; everything else is a run failure.
    pub fn is_config_error(&self) -> bool {
        matches!(self, LabError::Config(_) | LabError::CoupledSetup { .. } | LabError::Vorticity(_) | LabError::Compare(_))
    }
}

pub fn solve_potentials(cfg: &ExperimentConfig) -> Result<PotentialSet, LabError> {
    Ok(PotentialSet::solve(&cfg.shape_spec()?, cfg.shape.panels)?)
}

/// w₀ on the lattice, lab frame (equal to the body frame at t = 0).
pub fn initial_field(cfg: &ExperimentConfig) -> Result<BlobField, LabError> {
    lattice_fill(&cfg.vorticity.patches, cfg.vorticity.spacing, cfg.vorticity.delta, Frame::Lab)
        .map_err(|e| LabError::Vorticity(e.to_string()))
}

pub fn resolved_ell0(cfg: &ExperimentConfig, field: &BlobField) -> V2 {
    match cfg.body.ell0 {
        InitialVelocity::Value(v) => V2::new(v[0], v[1]),
        InitialVelocity::Keyword(_) => velocity_free_space(field, V2::zeros()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFormSummary {
    pub fitted_c: f64,
    pub coarse_fitted_c: f64,
    pub noise_flag: bool,
    pub max_residual: f64,
    /// Largest discrepancy of the rotated mass-matrix identity.
    pub rotated_mass_identity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledSummary {
    pub eps: f64,
    pub dt: f64,
    pub steps: usize,
    pub blobs: usize,
    pub ell0: [f64; 2],
    pub r0: f64,
    pub support_rho: f64,
    pub t_reached: f64,
    pub abort: Option<Abort>,
    /// max_t |ΣΓ_j(t) − ΣΓ_j(0)|.
    pub circulation_drift: f64,
    /// max_t |H(t) − H(0)| / |H(0)| when energies were recorded.
    pub energy_drift: Option<f64>,
    /// max_t (|ℓ| + ε|r|).
    pub modulated_bound: f64,
    pub normal_form: Option<NormalFormSummary>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CoupledOutcome {
    pub plan: StepPlan,
    pub run: CoupledRun,
    pub summary: CoupledSummary,
}

pub fn simulate_coupled_eps(cfg: &ExperimentConfig, pot: &PotentialSet, eps: f64) -> Result<CoupledOutcome, LabError> {
    let field = initial_field(cfg)?;
    let ell0 = resolved_ell0(cfg, &field);
    let params = CoupledParams { eps, alpha: cfg.body.alpha, genuine: cfg.genuine(), gamma: cfg.body.gamma };
    let (sys, state, warnings) = init_coupled_with(
        pot.clone(),
        params,
        &cfg.vorticity.patches,
        cfg.vorticity.spacing,
        cfg.vorticity.delta,
        ell0,
        cfg.body.r0,
    )
    .map_err(|source| LabError::CoupledSetup { eps, source })?;
    let plan = cfg.coupled_plan(eps);
    let opts = RunOptions { dt: plan.dt, t_final: cfg.run.t_final, record_every: plan.record_every, energy: cfg.run.energy };
    let run = run_coupled(&sys, &state, &opts);
    let beta0 = state.field.total_circulation();
    let circulation_drift = (run.final_state.field.total_circulation() - beta0).abs();
    let normal_form = (run.dense.len() > 4).then(|| {
        let tensors = StructureTensors::new(&pot.mass, &cfg.genuine());
        let rep = normal_form_residual(&tensors, eps, cfg.body.alpha, cfg.body.gamma, &run.dense);
        NormalFormSummary {
            fitted_c: rep.series.fitted_c,
            coarse_fitted_c: rep.coarse_fitted_c,
            noise_flag: rep.noise_flag,
            max_residual: rep.series.max_residual,
            rotated_mass_identity: rotated_mass_identity_check(&tensors, eps, cfg.body.alpha, &run.dense),
        }
    });
    let summary = CoupledSummary {
        eps,
        dt: plan.dt,
        steps: plan.steps,
        blobs: state.field.len(),
        ell0: [ell0.x, ell0.y],
        r0: cfg.body.r0,
        support_rho: sys.rho,
        t_reached: run.final_state.t,
        abort: run.abort.clone(),
        circulation_drift,
        energy_drift: cfg.run.energy.then(|| run.energy_drift()),
        modulated_bound: modulated_energy_bound(eps, &run.dense),
        normal_form,
        warnings,
    };
    Ok(CoupledOutcome { plan, run, summary })
}

/// One coupled run per ε, in parallel, in the order of `cfg.run.eps`.
pub fn simulate_coupled(cfg: &ExperimentConfig, pot: &PotentialSet) -> Result<Vec<CoupledOutcome>, LabError> {
    cfg.run.eps.par_iter().map(|&eps| simulate_coupled_eps(cfg, pot, eps)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSummary {
    pub dt: f64,
    pub steps: usize,
    pub blobs: usize,
    pub t_reached: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LimitOutcome {
    pub plan: StepPlan,
    pub run: LimitRun,
    pub summary: LimitSummary,
}

pub fn simulate_limit(cfg: &ExperimentConfig) -> Result<LimitOutcome, LabError> {
    let field = initial_field(cfg)?;
    let blobs = field.len();
    let initial = VortexWaveState::new(V2::zeros(), cfg.body.gamma, field).map_err(LabError::LimitSetup)?;
    let plan = cfg.limit_plan();
    let run = run_limit(&initial, cfg.run.t_final, plan.steps, plan.record_every);
    let summary = LimitSummary {
        dt: plan.dt,
        steps: plan.steps,
        blobs,
        t_reached: run.final_state.t,
        error: run.error.as_ref().map(|e| e.to_string()),
    };
    Ok(LimitOutcome { plan, run, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trivial() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(
            r#"
[shape]
panels = 32
preset = { kind = "disk", radius = 1.0 }
[body]
m1 = 1.0
j1 = 0.5
alpha = 2.0
gamma = 0.0
ell0 = "well-prepared"
[vorticity]
spacing = 0.1
delta = 0.1
[run]
eps = [0.2, 0.1]
t_final = 0.05
dt = 0.005
cfl = 0.5
record_interval = 0.01
energy = true
"#,
        )
        .unwrap()
    }

    #[test]
    fn empty_fluid_stays_at_rest() {
        let cfg = trivial();
        let pot = solve_potentials(&cfg).unwrap();
        let runs = simulate_coupled(&cfg, &pot).unwrap();
        assert_eq!(runs.len(), 2);
        for o in &runs {
            assert!(o.summary.abort.is_none());
            assert_eq!(o.summary.ell0, [0.0, 0.0]);
            assert_eq!(o.summary.warnings.len(), 1);
            assert!(o.run.records.iter().all(|r| r.h1 == 0.0 && r.h2 == 0.0 && r.l1 == 0.0 && r.r == 0.0));
            assert_eq!(o.run.records.len(), 6);
        }
        let lim = simulate_limit(&cfg).unwrap();
        assert!(lim.summary.error.is_none());
        assert!(lim.run.samples.iter().all(|s| s.h1 == 0.0 && s.h2 == 0.0));
        assert_eq!(lim.run.samples.len(), 6);
    }

    #[test]
    fn explicit_initial_velocity_is_used() {
        let mut cfg = trivial();
        cfg.body.ell0 = InitialVelocity::Value([0.25, 0.0]);
        let pot = solve_potentials(&cfg).unwrap();
        let o = simulate_coupled_eps(&cfg, &pot, 0.1).unwrap();
        assert_eq!(o.summary.ell0, [0.25, 0.0]);
        let last = o.run.records.last().unwrap();
        assert!((last.h1 - 0.25 * cfg.run.t_final).abs() < 1e-12, "{last:?}");
    }
}
