//! Vortex blobs and velocity assembly: the regularized free-space
//! Biot–Savart sum, its gradient at a point, the hydrodynamic kernel K_H
//! outside the body and the full body-frame fluid velocity.
//!
//! Blobs carry a Gaussian core of radius δ: K_δ(x) = x^⊥(1 − e^{−|x|²/δ²})/(2π|x|²),
//! the orthogonal gradient of ψ_δ(r) = (ln r² + E₁(r²/δ²))/(4π). Beyond 5δ the
//! exact point kernel is used.

use crate::geometry::{perp, V2};
use crate::potential::PotentialSet;
use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

const INV_2PI: f64 = 0.5 / PI;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Distance, in core radii, beyond which the point kernel is used.
pub const CORE_CUTOFF: f64 = 5.0;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BiotSavartError {
    #[error("blob {index} at {position:?} lies inside the body")]
    BlobInsideBody { index: usize, position: [f64; 2] },
    #[error("blob core radius must be positive and finite, got {0}")]
    BadCore(f64),
    #[error("{positions} positions but {gammas} circulations")]
    LengthMismatch { positions: usize, gammas: usize },
    #[error("blob field is in the {0:?} frame where the body frame is required")]
    WrongFrame(Frame),
    #[error("step rejected after {0} halvings: a blob entered the body")]
    StepRejected(usize),
    #[error("invalid patch: {0}")]
    BadPatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Body,
    Lab,
}

impl std::fmt::Display for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Frame::Body => "body",
            Frame::Lab => "lab",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobField {
    pub positions: Vec<V2>,
    pub gammas: Vec<f64>,
    pub delta: f64,
    pub frame: Frame,
}

impl BlobField {
    pub fn new(positions: Vec<V2>, gammas: Vec<f64>, delta: f64, frame: Frame) -> Result<Self, BiotSavartError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(BiotSavartError::BadCore(delta));
        }
        if positions.len() != gammas.len() {
            return Err(BiotSavartError::LengthMismatch { positions: positions.len(), gammas: gammas.len() });
        }
        Ok(BlobField { positions, gammas, delta, frame })
    }

    pub fn empty(delta: f64, frame: Frame) -> Self {
        BlobField { positions: Vec::new(), gammas: Vec::new(), delta, frame }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// β = ΣΓ_j.
    pub fn total_circulation(&self) -> f64 {
        self.gammas.iter().sum()
    }

    /// Same circulations at positions mapped by `f`, tagged with `frame`.
    pub fn mapped(&self, f: impl Fn(V2) -> V2, frame: Frame) -> BlobField {
        BlobField {
            positions: self.positions.iter().map(|&x| f(x)).collect(),
            gammas: self.gammas.clone(),
            delta: self.delta,
            frame,
        }
    }

    pub fn with_positions(&self, positions: Vec<V2>) -> BlobField {
        BlobField { positions, gammas: self.gammas.clone(), delta: self.delta, frame: self.frame }
    }

    /// (min, max) of |x_j − c|; (+∞, 0) for an empty field.
    pub fn distance_range(&self, c: V2) -> (f64, f64) {
        self.positions.iter().fold((f64::INFINITY, 0.0), |(lo, hi), x| {
            let d = (x - c).norm();
            (lo.min(d), hi.max(d))
        })
    }
}

/// Exponential integral E₁(x) for x > 0.
pub fn exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 needs a positive argument, got {x}");
    if x <= 1.0 {
        -EULER_GAMMA - x.ln() + e1_series_tail(x)
    } else {
        // Modified Lentz evaluation of the continued fraction.
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..200 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// −Σ_{k≥1} (−x)^k / (k·k!).
fn e1_series_tail(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..60 {
        term *= -x / k as f64;
        let add = term / k as f64;
        sum -= add;
        if add.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// Regularized kernel K_δ(d).
pub fn blob_kernel(d: V2, delta: f64) -> V2 {
    let s = d.norm_squared();
    if s == 0.0 {
        return V2::zeros();
    }
    let u = s / (delta * delta);
    let shape = if u > CORE_CUTOFF * CORE_CUTOFF { 1.0 } else { -(-u).exp_m1() };
    perp(d) * (INV_2PI * shape / s)
}

/// ψ_δ(|d|), the stream function with ∇^⊥ψ_δ = K_δ.
pub fn blob_stream(dist: f64, delta: f64) -> f64 {
    let u = (dist / delta).powi(2);
    if u > CORE_CUTOFF * CORE_CUTOFF {
        INV_2PI * dist.ln()
    } else if u <= 1.0 {
        0.25 / PI * ((delta * delta).ln() - EULER_GAMMA + e1_series_tail(u))
    } else {
        0.25 / PI * ((dist * dist).ln() + exp_integral_e1(u))
    }
}

/// Jacobian ∂_j (K_δ)_i at d, written K_δ = d^⊥ q(|d|²).
pub fn blob_kernel_jacobian(d: V2, delta: f64) -> Matrix2<f64> {
    let s = d.norm_squared();
    if s == 0.0 {
        let w = INV_2PI / (delta * delta);
        return Matrix2::new(0.0, -w, w, 0.0);
    }
    let u = s / (delta * delta);
    let (q, dq) = if u > CORE_CUTOFF * CORE_CUTOFF {
        (INV_2PI / s, -INV_2PI / (s * s))
    } else {
        let one_minus = -(-u).exp_m1();
        let e = (-u).exp();
        (INV_2PI * one_minus / s, INV_2PI * (e * u - one_minus) / (s * s))
    };
    let (x, y) = (d.x, d.y);
    Matrix2::new(-2.0 * x * y * dq, -2.0 * y * y * dq - q, 2.0 * x * x * dq + q, 2.0 * x * y * dq)
}

/// K_{ℝ²}[ω](x) as a blob sum.
pub fn velocity_free_space(field: &BlobField, x: V2) -> V2 {
    field
        .positions
        .iter()
        .zip(&field.gammas)
        .fold(V2::zeros(), |acc, (p, g)| acc + blob_kernel(x - p, field.delta) * *g)
}

pub fn velocity_free_space_many(field: &BlobField, xs: &[V2]) -> Vec<V2> {
    xs.par_iter().map(|&x| velocity_free_space(field, x)).collect()
}

/// Full Jacobian of the blob velocity at x.
pub fn velocity_jacobian(field: &BlobField, x: V2) -> Matrix2<f64> {
    field
        .positions
        .iter()
        .zip(&field.gammas)
        .fold(Matrix2::zeros(), |acc, (p, g)| acc + blob_kernel_jacobian(x - p, field.delta) * *g)
}

/// DK = [[−a, b], [b, a]], the traceless symmetric velocity gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientSample {
    pub a: f64,
    pub b: f64,
    /// Set when x lies within 5δ of a blob, where the field is not harmonic.
    pub flagged: bool,
}

impl GradientSample {
    pub fn zero() -> Self {
        GradientSample { a: 0.0, b: 0.0, flagged: false }
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(-self.a, self.b, self.b, self.a)
    }

    /// DK·x = a(−x₁, x₂) + b(x₂, x₁).
    pub fn apply(&self, x: V2) -> V2 {
        V2::new(-self.a * x.x + self.b * x.y, self.a * x.y + self.b * x.x)
    }
}

pub fn velocity_gradient(field: &BlobField, x: V2) -> GradientSample {
    let j = velocity_jacobian(field, x);
    let (near, _) = field.distance_range(x);
    GradientSample {
        a: 0.5 * (j[(1, 1)] - j[(0, 0)]),
        b: 0.5 * (j[(1, 0)] + j[(0, 1)]),
        flagged: near <= CORE_CUTOFF * field.delta,
    }
}

/// Uniform-density vorticity patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PatchSpec {
    Disk { center: [f64; 2], radius: f64, density: f64 },
    Annulus { center: [f64; 2], inner: f64, outer: f64, density: f64 },
}

impl PatchSpec {
    pub fn validate(&self) -> Result<(), BiotSavartError> {
        let ok = match *self {
            PatchSpec::Disk { radius, density, center } => radius > 0.0 && density.is_finite() && center.iter().all(|c| c.is_finite()),
            PatchSpec::Annulus { inner, outer, density, center } => {
                inner >= 0.0 && outer > inner && density.is_finite() && center.iter().all(|c| c.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(BiotSavartError::BadPatch(format!("{self:?}")))
        }
    }

    pub fn density_at(&self, x: V2) -> f64 {
        match *self {
            PatchSpec::Disk { center, radius, density } => {
                if (x - V2::new(center[0], center[1])).norm() < radius {
                    density
                } else {
                    0.0
                }
            }
            PatchSpec::Annulus { center, inner, outer, density } => {
                let r = (x - V2::new(center[0], center[1])).norm();
                if r >= inner && r < outer {
                    density
                } else {
                    0.0
                }
            }
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            PatchSpec::Disk { radius, .. } => PI * radius * radius,
            PatchSpec::Annulus { inner, outer, .. } => PI * (outer * outer - inner * inner),
        }
    }

    fn bounding_radius(&self) -> (V2, f64) {
        match *self {
            PatchSpec::Disk { center, radius, .. } => (V2::new(center[0], center[1]), radius),
            PatchSpec::Annulus { center, outer, .. } => (V2::new(center[0], center[1]), outer),
        }
    }
}

/// Deterministic fill of the patches on the cell-centred lattice
/// {((i + ½)s, (j + ½)s)}; each cell centre carries Γ = Σ densities · s².
pub fn lattice_fill(patches: &[PatchSpec], spacing: f64, delta: f64, frame: Frame) -> Result<BlobField, BiotSavartError> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(BiotSavartError::BadPatch(format!("lattice spacing {spacing}")));
    }
    for p in patches {
        p.validate()?;
    }
    let mut field = BlobField::new(Vec::new(), Vec::new(), delta, frame)?;
    if patches.is_empty() {
        return Ok(field);
    }
    let (mut lo, mut hi) = (V2::repeat(f64::INFINITY), V2::repeat(f64::NEG_INFINITY));
    for p in patches {
        let (c, r) = p.bounding_radius();
        lo = lo.inf(&(c - V2::repeat(r)));
        hi = hi.sup(&(c + V2::repeat(r)));
    }
    let (i0, i1) = ((lo.x / spacing).floor() as i64 - 1, (hi.x / spacing).ceil() as i64 + 1);
    let (j0, j1) = ((lo.y / spacing).floor() as i64 - 1, (hi.y / spacing).ceil() as i64 + 1);
    for j in j0..=j1 {
        for i in i0..=i1 {
            let x = V2::new((i as f64 + 0.5) * spacing, (j as f64 + 0.5) * spacing);
            let w: f64 = patches.iter().map(|p| p.density_at(x)).sum();
            if w != 0.0 {
                field.positions.push(x);
                field.gammas.push(w * spacing * spacing);
            }
        }
    }
    Ok(field)
}

fn require_body_frame(field: &BlobField) -> Result<(), BiotSavartError> {
    if field.frame != Frame::Body {
        return Err(BiotSavartError::WrongFrame(field.frame));
    }
    Ok(())
}

/// Fails if any blob lies inside εS₀.
pub fn check_outside_body(pot: &PotentialSet, eps: f64, field: &BlobField) -> Result<(), BiotSavartError> {
    let mesh = pot.mesh();
    let reach = eps * mesh.circumradius();
    for (index, x) in field.positions.iter().enumerate() {
        if x.norm() <= reach && mesh.contains(x / eps) {
            return Err(BiotSavartError::BlobInsideBody { index, position: [x.x, x.y] });
        }
    }
    Ok(())
}

/// The boundary correction turning K_{ℝ²}[ω] into K_H[ω] outside εS₀:
/// K_H = K_{ℝ²} + ∇φ with ∂_nφ = −K_{ℝ²}·n, φ decaying. The solve happens at
/// scale 1, where ∇φ(x) = ∇φ¹(x/ε).
#[derive(Debug, Clone)]
pub struct HydroCorrection {
    pub eps: f64,
    pub sigma: Vec<f64>,
    /// ∇φ at the mesh nodes (exterior limit).
    pub boundary_grad: Vec<V2>,
    /// K_{ℝ²}[ω] at the nodes of the ε-mesh.
    pub boundary_free: Vec<V2>,
}

impl HydroCorrection {
    pub fn new(pot: &PotentialSet, eps: f64, field: &BlobField) -> Result<Self, BiotSavartError> {
        require_body_frame(field)?;
        check_outside_body(pot, eps, field)?;
        let mesh = pot.mesh();
        let nodes: Vec<V2> = mesh.points.iter().map(|p| p * eps).collect();
        let boundary_free = velocity_free_space_many(field, &nodes);
        let g: Vec<f64> = (0..mesh.n).map(|j| -boundary_free[j].dot(&mesh.normals[j])).collect();
        let sol = pot.solver.solve_neumann_unchecked(&g);
        Ok(HydroCorrection { eps, sigma: sol.sigma, boundary_grad: sol.boundary_grad, boundary_free })
    }

    /// K_H[ω](x).
    pub fn velocity(&self, pot: &PotentialSet, field: &BlobField, x: V2) -> V2 {
        velocity_free_space(field, x) + pot.solver.gradient(&self.sigma, &self.boundary_grad, x / self.eps)
    }

    /// K_H[ω] at the nodes of the ε-mesh.
    pub fn boundary_trace(&self) -> Vec<V2> {
        self.boundary_free.iter().zip(&self.boundary_grad).map(|(k, g)| k + g).collect()
    }
}

/// K_H[ω](x) for a body-frame field outside εS₀.
pub fn hydrodynamic_velocity(pot: &PotentialSet, eps: f64, field: &BlobField, x: V2) -> Result<V2, BiotSavartError> {
    Ok(HydroCorrection::new(pot, eps, field)?.velocity(pot, field, x))
}

/// Body-frame velocity v = K_H[ω] + γH^ε + ℓ₁∇Φ₁^ε + ℓ₂∇Φ₂^ε + r∇Φ₃^ε and
/// its circulation-free part ṽ = v − γH^ε. All exterior potentials share one
/// combined single-layer density.
#[derive(Debug, Clone)]
pub struct BodyFlow<'a> {
    pub pot: &'a PotentialSet,
    pub field: &'a BlobField,
    pub eps: f64,
    pub gamma: f64,
    pub ell: V2,
    pub r: f64,
    pub hydro: HydroCorrection,
    sigma: Vec<f64>,
    boundary_grad: Vec<V2>,
}

impl<'a> BodyFlow<'a> {
    pub fn new(pot: &'a PotentialSet, eps: f64, field: &'a BlobField, gamma: f64, ell: V2, r: f64) -> Result<Self, BiotSavartError> {
        let hydro = HydroCorrection::new(pot, eps, field)?;
        let coeffs = [ell.x, ell.y, eps * r];
        let mut sigma = hydro.sigma.clone();
        let mut boundary_grad = hydro.boundary_grad.clone();
        for (i, c) in coeffs.iter().enumerate() {
            let phi = &pot.phi[i];
            for j in 0..sigma.len() {
                sigma[j] += c * phi.sigma[j];
                boundary_grad[j] += phi.boundary_grad[j] * *c;
            }
        }
        Ok(BodyFlow { pot, field, eps, gamma, ell, r, hydro, sigma, boundary_grad })
    }

    /// ṽ(x).
    pub fn v_tilde(&self, x: V2) -> V2 {
        velocity_free_space(self.field, x) + self.pot.solver.gradient(&self.sigma, &self.boundary_grad, x / self.eps)
    }

    /// v(x).
    pub fn v(&self, x: V2) -> V2 {
        self.v_tilde(x) + self.pot.h_eps(self.eps, x) * self.gamma
    }

    pub fn k_h(&self, x: V2) -> V2 {
        self.hydro.velocity(self.pot, self.field, x)
    }

    /// ṽ at the nodes of the ε-mesh.
    pub fn boundary_v_tilde(&self) -> Vec<V2> {
        self.hydro.boundary_free.iter().zip(&self.boundary_grad).map(|(k, g)| k + g).collect()
    }

    /// v at the nodes of the ε-mesh.
    pub fn boundary_v(&self) -> Vec<V2> {
        let h = self.pot.boundary_h_eps(self.eps);
        self.boundary_v_tilde().iter().zip(&h).map(|(v, h)| v + h * self.gamma).collect()
    }

    /// v at every blob.
    pub fn blob_velocities(&self) -> Vec<V2> {
        self.field.positions.par_iter().map(|&x| self.v(x)).collect()
    }

    /// Transport velocity v − ℓ − r x^⊥ at every blob.
    pub fn relative_blob_velocities(&self) -> Vec<V2> {
        self.field.positions.par_iter().map(|&x| self.v(x) - self.ell - perp(x) * self.r).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AdvectReport {
    pub substeps: usize,
    pub halvings: usize,
}

fn rk4_positions(x0: &[V2], velocity: &impl Fn(&[V2]) -> Vec<V2>, dt: f64) -> Vec<V2> {
    let stage = |k: &[V2], c: f64| -> Vec<V2> { x0.iter().zip(k).map(|(x, v)| x + v * c).collect() };
    let k1 = velocity(x0);
    let k2 = velocity(&stage(&k1, 0.5 * dt));
    let k3 = velocity(&stage(&k2, 0.5 * dt));
    let k4 = velocity(&stage(&k3, dt));
    (0..x0.len()).map(|j| x0[j] + (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (dt / 6.0)).collect()
}

/// One RK4 step of all blob positions under `velocity`. A step that puts a
/// blob into the forbidden region is redone as two half steps, recursively,
/// up to `max_halvings` levels.
pub fn advect(
    field: &BlobField,
    velocity: impl Fn(&[V2]) -> Vec<V2>,
    dt: f64,
    forbidden: impl Fn(V2) -> bool,
    max_halvings: usize,
) -> Result<(BlobField, AdvectReport), BiotSavartError> {
    assert!(dt > 0.0, "advect needs dt > 0");
    let mut report = AdvectReport::default();
    let positions = advect_level(&field.positions, &velocity, dt, &forbidden, max_halvings, 0, &mut report)?;
    Ok((field.with_positions(positions), report))
}

fn advect_level(
    x0: &[V2],
    velocity: &impl Fn(&[V2]) -> Vec<V2>,
    dt: f64,
    forbidden: &impl Fn(V2) -> bool,
    max_halvings: usize,
    level: usize,
    report: &mut AdvectReport,
) -> Result<Vec<V2>, BiotSavartError> {
    let x1 = rk4_positions(x0, velocity, dt);
    if !x1.iter().any(|&x| forbidden(x)) {
        report.substeps += 1;
        return Ok(x1);
    }
    if level >= max_halvings {
        return Err(BiotSavartError::StepRejected(level));
    }
    report.halvings += 1;
    let mid = advect_level(x0, velocity, 0.5 * dt, forbidden, max_halvings, level + 1, report)?;
    advect_level(&mid, velocity, 0.5 * dt, forbidden, max_halvings, level + 1, report)
}
