//! The body of size ε in the body frame: blobs transported by v − ℓ − r x^⊥
//! and Newton's equations M^ε(ℓ, r)′ = −B − C − (m^ε r ℓ^⊥, 0), where the
//! fluid force is the vorticity integral B plus the boundary integrals C.

use crate::biotsavart::{
    check_outside_body, lattice_fill, velocity_free_space, velocity_gradient, BiotSavartError, BlobField, BodyFlow, Frame,
    GradientSample, PatchSpec,
};
use crate::geometry::{perp, rotation, BoundaryMesh, ShapeSpec, V2};
use crate::potential::{GenuineMass, GreenRegular, PotentialError, PotentialSet};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

const INV_2PI: f64 = 0.5 / PI;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CoupledError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Blob(#[from] BiotSavartError),
    #[error("ε = {eps} exceeds the support-separation bound {bound:.4}")]
    EpsTooLarge { eps: f64, bound: f64 },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbortReason {
    Collision,
    AnnulusExit,
    DtGuard,
}

impl std::fmt::Display for AbortReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AbortReason::Collision => "collision",
            AbortReason::AnnulusExit => "annulus-exit",
            AbortReason::DtGuard => "dt-guard",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub reason: AbortReason,
    pub t: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledParams {
    pub eps: f64,
    pub alpha: f64,
    pub genuine: GenuineMass,
    pub gamma: f64,
}

impl CoupledParams {
    /// m^ε = ε^α m¹.
    pub fn mass_eps(&self) -> f64 {
        self.eps.powf(self.alpha) * self.genuine.m1
    }

    /// J^ε = ε^{α+2} J¹.
    pub fn inertia_eps(&self) -> f64 {
        self.eps.powf(self.alpha + 2.0) * self.genuine.j1
    }

    fn validate(&self) -> Result<(), CoupledError> {
        let finite = [self.eps, self.alpha, self.genuine.m1, self.genuine.j1, self.gamma].iter().all(|v| v.is_finite());
        if !finite || self.eps <= 0.0 || self.genuine.m1 <= 0.0 || self.genuine.j1 <= 0.0 {
            return Err(CoupledError::BadParameter(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Everything fixed during a run: the scale-1 potentials, the parameters,
/// M^ε and its inverse, and the ε-scaled boundary data.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    pub pot: PotentialSet,
    pub params: CoupledParams,
    pub mass_matrix: Matrix3<f64>,
    mass_inverse: Matrix3<f64>,
    pub mesh_eps: BoundaryMesh,
    /// K_i on the ε-mesh, i = 1..3.
    kirchhoff_eps: [Vec<f64>; 3],
    /// H^ε on the ε-mesh.
    h_trace: Vec<V2>,
    /// Support parameter ρ: the run stays valid while every blob lies in
    /// B(h, 2ρ) ∖ B(h, 1/(2ρ)).
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledState {
    pub t: f64,
    pub h: V2,
    pub theta: f64,
    pub ell: V2,
    pub r: f64,
    /// Body-frame vorticity.
    pub field: BlobField,
}

impl CoupledState {
    pub fn at_rest(field: BlobField) -> Self {
        CoupledState { t: 0.0, h: V2::zeros(), theta: 0.0, ell: V2::zeros(), r: 0.0, field }
    }

    /// p = (ℓ, r).
    pub fn p(&self) -> Vector3<f64> {
        Vector3::new(self.ell.x, self.ell.y, self.r)
    }
}

/// ρ = max(ρ_max, 1/ρ_min) for the blob distances to the origin; 1 for an empty field.
pub fn support_parameter(field: &BlobField) -> f64 {
    if field.is_empty() {
        return 1.0;
    }
    let (lo, hi) = field.distance_range(V2::zeros());
    hi.max(1.0 / lo).max(1.0)
}

impl CoupledSystem {
    pub fn new(pot: PotentialSet, params: CoupledParams, rho: f64) -> Result<Self, CoupledError> {
        params.validate()?;
        let eps = params.eps;
        let mass_matrix = pot.mass.total_mass_eps(eps, params.alpha, &params.genuine);
        let mass_inverse = mass_matrix
            .cholesky()
            .ok_or_else(|| CoupledError::BadParameter("M^ε is not positive definite".into()))?
            .inverse();
        let mesh_eps = pot.mesh().scaled(eps);
        let kirchhoff_eps = [1, 2, 3].map(|i| mesh_eps.kirchhoff_vector(i));
        let h_trace = pot.boundary_h_eps(eps);
        Ok(CoupledSystem { pot, params, mass_matrix, mass_inverse, mesh_eps, kirchhoff_eps, h_trace, rho })
    }

    pub fn eps(&self) -> f64 {
        self.params.eps
    }

    /// The largest admissible ε for support parameter ρ: ε·R ≤ 1/(2ρ) with R the
    /// circumradius of S₀.
    pub fn eps_bound(pot: &PotentialSet, rho: f64) -> f64 {
        0.5 / (rho * pot.mesh().circumradius())
    }

    /// Distance from x to ∂S₀^ε (nodal).
    pub fn distance_to_body(&self, x: V2) -> f64 {
        self.eps() * self.pot.mesh().distance_to(x / self.eps())
    }
}

/// Builds the system and the initial state: body at h = 0, θ = 0, w₀ filled on
/// the lattice. Returns warnings for admissible but degenerate data.
#[allow(clippy::too_many_arguments)]
pub fn init_coupled(
    shape: &ShapeSpec,
    panels: usize,
    params: CoupledParams,
    w0: &[PatchSpec],
    spacing: f64,
    delta: f64,
    ell0: V2,
    r0: f64,
) -> Result<(CoupledSystem, CoupledState, Vec<String>), CoupledError> {
    let pot = PotentialSet::solve(shape, panels)?;
    init_coupled_with(pot, params, w0, spacing, delta, ell0, r0)
}

/// As `init_coupled`, reusing already solved potentials.
pub fn init_coupled_with(
    pot: PotentialSet,
    params: CoupledParams,
    w0: &[PatchSpec],
    spacing: f64,
    delta: f64,
    ell0: V2,
    r0: f64,
) -> Result<(CoupledSystem, CoupledState, Vec<String>), CoupledError> {
    params.validate()?;
    let field = lattice_fill(w0, spacing, delta, Frame::Body)?;
    check_outside_body(&pot, params.eps, &field)?;
    let rho = support_parameter(&field);
    let bound = CoupledSystem::eps_bound(&pot, rho);
    if params.eps > bound {
        return Err(CoupledError::EpsTooLarge { eps: params.eps, bound });
    }
    let mut warnings = Vec::new();
    if params.gamma == 0.0 {
        warnings.push("γ = 0: the small-body limit is not covered for vanishing circulation".to_string());
    }
    let sys = CoupledSystem::new(pot, params, rho)?;
    let state = CoupledState { ell: ell0, r: r0, ..CoupledState::at_rest(field) };
    Ok((sys, state, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceBreakdown {
    pub b: Vector3<f64>,
    pub c_a: Vector3<f64>,
    pub c_b: Vector3<f64>,
    pub c_c: Vector3<f64>,
    /// (m^ε r ℓ^⊥, 0).
    pub coriolis: Vector3<f64>,
    pub ell_dot: V2,
    pub r_dot: f64,
}

impl ForceBreakdown {
    pub fn total(&self) -> Vector3<f64> {
        self.b + self.c_a + self.c_b + self.c_c + self.coriolis
    }
}

/// Right-hand side of the joint system at one state.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub forces: ForceBreakdown,
    /// Fluid velocity v at each blob.
    pub blob_fluid: Vec<V2>,
    /// Transport velocity v − ℓ − r x^⊥ at each blob.
    pub blob_transport: Vec<V2>,
}

fn v3(v: V2, z: f64) -> Vector3<f64> {
    Vector3::new(v.x, v.y, z)
}

fn flow<'a>(sys: &'a CoupledSystem, state: &'a CoupledState) -> Result<BodyFlow<'a>, BiotSavartError> {
    BodyFlow::new(&sys.pot, sys.eps(), &state.field, sys.params.gamma, state.ell, state.r)
}

/// B_i = Σ_j Γ_j [v(x_j) − ℓ − r x_j^⊥]^⊥ · ∇Φ_i^ε(x_j).
fn force_b_from(sys: &CoupledSystem, state: &CoupledState, transport: &[V2]) -> Vector3<f64> {
    let eps = sys.eps();
    state
        .field
        .positions
        .par_iter()
        .zip(&state.field.gammas)
        .zip(transport)
        .map(|((&x, &g), &w)| {
            let wp = perp(w) * g;
            Vector3::from_fn(|i, _| wp.dot(&sys.pot.grad_phi_eps(i + 1, eps, x)))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Vector3::zeros(), |a, b| a + b)
}

/// (C_a, C_b, C_c) by boundary quadrature on the ε-mesh.
fn force_c_from(sys: &CoupledSystem, state: &CoupledState, flow: &BodyFlow) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let mesh = &sys.mesh_eps;
    let vt = flow.boundary_v_tilde();
    let gamma = sys.params.gamma;
    let (mut ca, mut cb, mut cc) = (Vector3::zeros(), Vector3::zeros(), Vector3::zeros());
    for j in 0..mesh.n {
        let x = mesh.points[j];
        let rigid = state.ell + perp(x) * state.r;
        let h = sys.h_trace[j];
        let fa = 0.5 * vt[j].norm_squared() - rigid.dot(&vt[j]);
        let fb = gamma * (vt[j] - rigid).dot(&h);
        let fc = 0.5 * gamma * gamma * h.norm_squared();
        for i in 0..3 {
            let wk = mesh.weights[j] * sys.kirchhoff_eps[i][j];
            ca[i] += wk * fa;
            cb[i] += wk * fb;
            cc[i] += wk * fc;
        }
    }
    (ca, cb, cc)
}

pub fn evaluate(sys: &CoupledSystem, state: &CoupledState) -> Result<Evaluation, BiotSavartError> {
    let flow = flow(sys, state)?;
    let blob_fluid = flow.blob_velocities();
    let blob_transport: Vec<V2> =
        state.field.positions.iter().zip(&blob_fluid).map(|(x, v)| v - state.ell - perp(*x) * state.r).collect();
    let b = force_b_from(sys, state, &blob_transport);
    let (c_a, c_b, c_c) = force_c_from(sys, state, &flow);
    let coriolis = v3(perp(state.ell) * (sys.params.mass_eps() * state.r), 0.0);
    let rhs = -(b + c_a + c_b + c_c + coriolis);
    let acc = sys.mass_inverse * rhs;
    let forces = ForceBreakdown { b, c_a, c_b, c_c, coriolis, ell_dot: V2::new(acc.x, acc.y), r_dot: acc.z };
    Ok(Evaluation { forces, blob_fluid, blob_transport })
}

pub fn force_b(sys: &CoupledSystem, state: &CoupledState) -> Result<Vector3<f64>, BiotSavartError> {
    Ok(evaluate(sys, state)?.forces.b)
}

pub fn force_c(sys: &CoupledSystem, state: &CoupledState) -> Result<(Vector3<f64>, Vector3<f64>, Vector3<f64>), BiotSavartError> {
    let flow = flow(sys, state)?;
    Ok(force_c_from(sys, state, &flow))
}

pub fn accelerations(sys: &CoupledSystem, state: &CoupledState) -> Result<(V2, f64, ForceBreakdown), BiotSavartError> {
    let f = evaluate(sys, state)?.forces;
    Ok((f.ell_dot, f.r_dot, f))
}

/// max |M^ε(ℓ′, r′) + B + C + Coriolis|.
pub fn force_balance_residual(sys: &CoupledSystem, f: &ForceBreakdown) -> f64 {
    (sys.mass_matrix * v3(f.ell_dot, f.r_dot) + f.total()).amax()
}

fn displaced(state: &CoupledState, ev: &Evaluation, c: f64) -> CoupledState {
    let f = &ev.forces;
    CoupledState {
        t: state.t + c,
        h: state.h + rotation(state.theta) * state.ell * c,
        theta: state.theta + state.r * c,
        ell: state.ell + f.ell_dot * c,
        r: state.r + f.r_dot * c,
        field: state.field.with_positions(state.field.positions.iter().zip(&ev.blob_transport).map(|(x, v)| x + v * c).collect()),
    }
}

fn collision(t: f64, e: BiotSavartError) -> Abort {
    Abort { reason: AbortReason::Collision, t, detail: e.to_string() }
}

/// min over blobs of the distance to ∂S₀^ε.
pub fn min_body_distance(sys: &CoupledSystem, state: &CoupledState) -> f64 {
    state.field.positions.iter().map(|&x| sys.distance_to_body(x)).fold(f64::INFINITY, f64::min)
}

/// Checks dt·max|transport| < 0.2 · min blob–body distance.
pub fn dt_guard(sys: &CoupledSystem, state: &CoupledState, ev: &Evaluation, dt: f64) -> Result<(), Abort> {
    if state.field.is_empty() {
        return Ok(());
    }
    let vmax = ev.blob_transport.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let dmin = min_body_distance(sys, state);
    if dt * vmax >= 0.2 * dmin {
        return Err(Abort {
            reason: AbortReason::DtGuard,
            t: state.t,
            detail: format!("dt·max|v| = {:.3e} ≥ 0.2·{dmin:.3e}", dt * vmax),
        });
    }
    Ok(())
}

/// One RK4 step of (blobs, ℓ, r, θ, h), given the evaluation at `state`.
pub fn coupled_step_from(sys: &CoupledSystem, state: &CoupledState, k1: &Evaluation, dt: f64) -> Result<CoupledState, Abort> {
    assert!(dt > 0.0, "coupled_step needs dt > 0");
    dt_guard(sys, state, k1, dt)?;
    let s2 = displaced(state, k1, 0.5 * dt);
    let k2 = evaluate(sys, &s2).map_err(|e| collision(s2.t, e))?;
    let s3 = displaced_from(state, &s2, &k2, 0.5 * dt);
    let k3 = evaluate(sys, &s3).map_err(|e| collision(s3.t, e))?;
    let s4 = displaced_from(state, &s3, &k3, dt);
    let k4 = evaluate(sys, &s4).map_err(|e| collision(s4.t, e))?;
    let comb = |a: V2, b: V2, c: V2, d: V2| (a + (b + c) * 2.0 + d) * (dt / 6.0);
    let combs = |a: f64, b: f64, c: f64, d: f64| (a + 2.0 * (b + c) + d) * (dt / 6.0);
    let hdot = |s: &CoupledState| rotation(s.theta) * s.ell;
    let positions = (0..state.field.len())
        .map(|j| {
            state.field.positions[j]
                + comb(k1.blob_transport[j], k2.blob_transport[j], k3.blob_transport[j], k4.blob_transport[j])
        })
        .collect();
    let (f1, f2, f3, f4) = (&k1.forces, &k2.forces, &k3.forces, &k4.forces);
    let next = CoupledState {
        t: state.t + dt,
        h: state.h + comb(hdot(state), hdot(&s2), hdot(&s3), hdot(&s4)),
        theta: state.theta + combs(state.r, s2.r, s3.r, s4.r),
        ell: state.ell + comb(f1.ell_dot, f2.ell_dot, f3.ell_dot, f4.ell_dot),
        r: state.r + combs(f1.r_dot, f2.r_dot, f3.r_dot, f4.r_dot),
        field: state.field.with_positions(positions),
    };
    check_outside_body(&sys.pot, sys.eps(), &next.field).map_err(|e| collision(next.t, e))?;
    Ok(next)
}

/// `base` advanced by c times the derivative evaluated at `at`.
fn displaced_from(base: &CoupledState, at: &CoupledState, ev: &Evaluation, c: f64) -> CoupledState {
    let f = &ev.forces;
    CoupledState {
        t: base.t + c,
        h: base.h + rotation(at.theta) * at.ell * c,
        theta: base.theta + at.r * c,
        ell: base.ell + f.ell_dot * c,
        r: base.r + f.r_dot * c,
        field: base.field.with_positions(base.field.positions.iter().zip(&ev.blob_transport).map(|(x, v)| x + v * c).collect()),
    }
}

pub fn coupled_step(sys: &CoupledSystem, state: &CoupledState, dt: f64) -> Result<CoupledState, Abort> {
    let k1 = evaluate(sys, state).map_err(|e| collision(state.t, e))?;
    coupled_step_from(sys, state, &k1, dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// ½ pᵀM^ε p.
    pub kinetic: f64,
    /// −½ ΣΣ Γ_iΓ_j G_H^ε(x_i, x_j).
    pub vortex: f64,
    /// −γ Σ Γ_j Ψ_{H^ε}(x_j).
    pub circulation: f64,
    pub total: f64,
}

/// g^ε(x, y) = g¹(x/ε, y/ε) − (1/2π) ln ε for every blob pair, as Σ_ij Γ_iΓ_j g^ε(x_i, x_j).
fn regular_pair_sum(sys: &CoupledSystem, field: &BlobField) -> f64 {
    let eps = sys.eps();
    let solver = &sys.pot.solver;
    let beta = field.total_circulation();
    let inner: f64 = field
        .positions
        .par_iter()
        .zip(&field.gammas)
        .map(|(&y, &gy)| {
            let g = GreenRegular::new(solver, y / eps);
            gy * field.positions.iter().zip(&field.gammas).map(|(&x, &gx)| gx * g.value(solver, x / eps)).sum::<f64>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    inner - INV_2PI * eps.ln() * beta * beta
}

/// H^ε = ½[pᵀM^εp − ΣΣΓ_iΓ_j G_H^ε(x_i, x_j) − 2γΣΓ_jΨ_H(x_j)], with
/// G_H^ε(x, y) = ψ_δ(|x − y|) + g^ε(x, y) + Ψ_H(x) + Ψ_H(y).
pub fn total_energy(sys: &CoupledSystem, state: &CoupledState) -> EnergyBreakdown {
    let p = state.p();
    let kinetic = 0.5 * p.dot(&(sys.mass_matrix * p));
    let field = &state.field;
    let eps = sys.eps();
    let psi_h: Vec<f64> = field.positions.par_iter().map(|&x| sys.pot.psi_h_eps(eps, x)).collect();
    let weighted_psi: f64 = field.gammas.iter().zip(&psi_h).map(|(g, p)| g * p).sum();
    let beta = field.total_circulation();
    let free: f64 = field
        .positions
        .par_iter()
        .zip(&field.gammas)
        .map(|(&y, &gy)| {
            gy * field
                .positions
                .iter()
                .zip(&field.gammas)
                .map(|(&x, &gx)| gx * crate::biotsavart::blob_stream((x - y).norm(), field.delta))
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let pair = if field.is_empty() { 0.0 } else { free + regular_pair_sum(sys, field) + 2.0 * beta * weighted_psi };
    let vortex = -0.5 * pair;
    let circulation = -sys.params.gamma * weighted_psi;
    EnergyBreakdown { kinetic, vortex, circulation, total: kinetic + vortex + circulation }
}

/// G_H^ε(x, y) for point sources (no core).
pub fn hydrodynamic_green(sys: &CoupledSystem, x: V2, y: V2) -> f64 {
    let eps = sys.eps();
    let solver = &sys.pot.solver;
    let g = GreenRegular::new(solver, y / eps).value(solver, x / eps) - INV_2PI * eps.ln();
    INV_2PI * (x - y).norm().ln() + g + sys.pot.psi_h_eps(eps, x) + sys.pot.psi_h_eps(eps, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabView {
    pub h: V2,
    pub h_dot: V2,
    pub theta: f64,
    /// w: blobs at R_θ x + h.
    pub field: BlobField,
}

pub fn lab_frame_view(state: &CoupledState) -> LabView {
    let rot = rotation(state.theta);
    LabView {
        h: state.h,
        h_dot: rot * state.ell,
        theta: state.theta,
        field: state.field.mapped(|x| rot * x + state.h, Frame::Lab),
    }
}

impl LabView {
    /// The body-frame field x = R_θᵀ(X − h).
    pub fn body_field(&self) -> BlobField {
        let rt = rotation(self.theta).transpose();
        self.field.mapped(|x| rt * (x - self.h), Frame::Body)
    }
}

/// u^ε(X) = R_θ v^ε(R_θᵀ(X − h)).
pub fn lab_velocity(sys: &CoupledSystem, state: &CoupledState, x: V2) -> Result<V2, BiotSavartError> {
    let rot = rotation(state.theta);
    let f = flow(sys, state)?;
    Ok(rot * f.v(rot.transpose() * (x - state.h)))
}

/// K₀ = K_{ℝ²}[ω](0) and DK₀ from the body-frame blobs.
pub fn origin_flow(field: &BlobField) -> (V2, GradientSample) {
    (velocity_free_space(field, V2::zeros()), velocity_gradient(field, V2::zeros()))
}

/// One dense sample per step: the state scalars, accelerations and the
/// free-space flow at the body centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseSample {
    pub t: f64,
    pub h: V2,
    pub theta: f64,
    pub ell: V2,
    pub r: f64,
    pub ell_dot: V2,
    pub r_dot: f64,
    pub k0: V2,
    pub a: f64,
    pub b: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub h1: f64,
    pub h2: f64,
    pub theta: f64,
    pub l1: f64,
    pub l2: f64,
    pub r: f64,
    pub energy: f64,
    pub gamma: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

impl Record {
    pub const HEADER: [&'static str; 11] = ["t", "h1", "h2", "theta", "l1", "l2", "r", "energy", "gamma", "rho_min", "rho_max"];

    pub fn h(&self) -> V2 {
        V2::new(self.h1, self.h2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub dt: f64,
    pub t_final: f64,
    /// Records (with energy and lab blob snapshot) every this many steps.
    pub record_every: usize,
    pub energy: bool,
}

#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub dense: Vec<DenseSample>,
    pub records: Vec<Record>,
    /// Lab-frame blob positions at each record.
    pub snapshots: Vec<Vec<V2>>,
    pub abort: Option<Abort>,
    pub final_state: CoupledState,
    pub dt: f64,
    pub eps: f64,
}

impl CoupledRun {
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.records.first().map(|r| r.energy).unwrap_or(0.0);
        let scale = e0.abs().max(f64::MIN_POSITIVE);
        self.records.iter().map(|r| (r.energy - e0).abs() / scale).fold(0.0, f64::max)
    }
}

fn record_of(sys: &CoupledSystem, state: &CoupledState, energy: bool) -> Record {
    let (rho_min, rho_max) = state.field.distance_range(V2::zeros());
    Record {
        t: state.t,
        h1: state.h.x,
        h2: state.h.y,
        theta: state.theta,
        l1: state.ell.x,
        l2: state.ell.y,
        r: state.r,
        energy: if energy { total_energy(sys, state).total } else { f64::NAN },
        gamma: sys.params.gamma,
        rho_min,
        rho_max,
    }
}

/// Integrates with `round(t_final/dt)` RK4 steps. Aborts on collision, on
/// the dt guard, or when a blob leaves B(h, 2ρ) ∖ B(h, 1/(2ρ)).
pub fn run_coupled(sys: &CoupledSystem, initial: &CoupledState, opts: &RunOptions) -> CoupledRun {
    let steps = (opts.t_final / opts.dt).round().max(1.0) as usize;
    let dt = opts.t_final / steps as f64;
    let t0 = initial.t;
    let mut run = CoupledRun {
        dense: Vec::with_capacity(steps + 1),
        records: Vec::new(),
        snapshots: Vec::new(),
        abort: None,
        final_state: initial.clone(),
        dt,
        eps: sys.eps(),
    };
    let (inner, outer) = (0.5 / sys.rho, 2.0 * sys.rho);
    let mut state = initial.clone();
    for k in 0..=steps {
        let ev = match evaluate(sys, &state) {
            Ok(ev) => ev,
            Err(e) => {
                run.abort = Some(collision(state.t, e));
                break;
            }
        };
        let (k0, grad) = origin_flow(&state.field);
        run.dense.push(DenseSample {
            t: state.t,
            h: state.h,
            theta: state.theta,
            ell: state.ell,
            r: state.r,
            ell_dot: ev.forces.ell_dot,
            r_dot: ev.forces.r_dot,
            k0,
            a: grad.a,
            b: grad.b,
            flagged: grad.flagged,
        });
        if k % opts.record_every == 0 || k == steps {
            run.records.push(record_of(sys, &state, opts.energy));
            run.snapshots.push(lab_frame_view(&state).field.positions);
        }
        let (lo, hi) = state.field.distance_range(V2::zeros());
        if !state.field.is_empty() && (lo <= inner || hi >= outer) {
            run.abort = Some(Abort {
                reason: AbortReason::AnnulusExit,
                t: state.t,
                detail: format!("blob distances [{lo:.4}, {hi:.4}] outside ({inner:.4}, {outer:.4})"),
            });
            break;
        }
        if k == steps {
            break;
        }
        match coupled_step_from(sys, &state, &ev, dt) {
            Ok(mut next) => {
                next.t = t0 + (k + 1) as f64 * dt;
                state = next;
            }
            Err(a) => {
                run.abort = Some(a);
                break;
            }
        }
    }
    run.final_state = state;
    run
}
