//! Modulated variables, the gyroscopic structure tensors, the small-ε
//! expansions of the force terms and trajectory diagnostics for the normal
//! form
//!   (ε^α M_g + ε² M_a) p̃′ + ⟨ε^{α−1}Λ_g + εΛ_a, p̃, p̃⟩ = γ p̃×B + εγG + ε^{min(α,2)} F.

use crate::biotsavart::{BodyFlow, GradientSample};
use crate::coupled_system::{origin_flow, CoupledState, CoupledSystem, DenseSample};
use crate::geometry::{perp, rotation, V2};
use crate::potential::{GenuineMass, MassData};
use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub type V3 = Vector3<f64>;

/// K₀, DK₀ and the modulated velocities at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationData {
    pub k0: V2,
    pub grad: GradientSample,
    /// ℓ̃ = ℓ − K₀ − ε DK₀·ξ.
    pub ell_tilde: V2,
    /// p̃ = (ℓ̃, εr).
    pub p_tilde: V3,
    /// p̂ = (ℓ, εr).
    pub p_hat: V3,
    /// p̌ = (ℓ − K₀, εr).
    pub p_check: V3,
}

pub fn modulation_from(eps: f64, xi: V2, ell: V2, r: f64, k0: V2, grad: GradientSample) -> ModulationData {
    let ell_tilde = ell - k0 - grad.apply(xi) * eps;
    ModulationData {
        k0,
        grad,
        ell_tilde,
        p_tilde: V3::new(ell_tilde.x, ell_tilde.y, eps * r),
        p_hat: V3::new(ell.x, ell.y, eps * r),
        p_check: V3::new(ell.x - k0.x, ell.y - k0.y, eps * r),
    }
}

pub fn modulation(sys: &CoupledSystem, state: &CoupledState) -> ModulationData {
    let (k0, grad) = origin_flow(&state.field);
    modulation_from(sys.eps(), sys.pot.mass.xi, state.ell, state.r, k0, grad)
}

pub fn modulation_of_sample(eps: f64, xi: V2, s: &DenseSample) -> ModulationData {
    let grad = GradientSample { a: s.a, b: s.b, flagged: s.flagged };
    modulation_from(eps, xi, s.ell, s.r, s.k0, grad)
}

/// p_a × p_b = (ω_a ℓ_b^⊥ − ω_b ℓ_a^⊥, ℓ_a^⊥·ℓ_b) for p = (ℓ, ω).
pub fn cross(pa: V3, pb: V3) -> V3 {
    let (la, lb) = (V2::new(pa.x, pa.y), V2::new(pb.x, pb.y));
    let top = perp(lb) * pa.z - perp(la) * pb.z;
    V3::new(top.x, top.y, perp(la).dot(&lb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lambda {
    G,
    Under,
    A,
}

/// Scale-1 tensors of the normal form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureTensors {
    pub m_g: Matrix3<f64>,
    pub m_a: Matrix3<f64>,
    pub m_flat: Matrix2<f64>,
    pub m1: f64,
    pub mu: V3,
    pub mu_hat: V3,
    pub mu_check: V3,
    pub xi: V2,
    pub eta: V2,
}

impl StructureTensors {
    pub fn new(mass: &MassData, genuine: &GenuineMass) -> Self {
        StructureTensors {
            m_g: genuine.matrix(),
            m_a: mass.m_a,
            m_flat: mass.m_flat,
            m1: genuine.m1,
            mu: mass.mu,
            mu_hat: mass.mu_hat,
            mu_check: mass.mu_check,
            xi: mass.xi,
            eta: mass.eta,
        }
    }

    /// B = (ξ^⊥, −1).
    pub fn b_vector(&self) -> V3 {
        let x = perp(self.xi);
        V3::new(x.x, x.y, -1.0)
    }

    /// ⟨Λ, p, p⟩.
    pub fn quadratic(&self, which: Lambda, p: V3) -> V3 {
        let (l, r) = (V2::new(p.x, p.y), p.z);
        match which {
            Lambda::G => {
                let v = perp(l) * (self.m1 * r);
                V3::new(v.x, v.y, 0.0)
            }
            Lambda::Under => {
                let ml = self.m_flat * l;
                let v = perp(ml) * r;
                V3::new(v.x, v.y, perp(l).dot(&ml))
            }
            Lambda::A => self.quadratic(Lambda::Under, p) + cross(p, self.mu) * r,
        }
    }

    /// ⟨Λ, p, q⟩ by polarization.
    pub fn bilinear(&self, which: Lambda, p: V3, q: V3) -> V3 {
        (self.quadratic(which, p + q) - self.quadratic(which, p - q)) * 0.25
    }

    /// ε^α M_g + ε² M_a.
    pub fn modulated_mass(&self, eps: f64, alpha: f64) -> Matrix3<f64> {
        self.m_g * eps.powf(alpha) + self.m_a * (eps * eps)
    }

    /// Q_θ = diag(R_θ, 1).
    pub fn q_theta(theta: f64) -> Matrix3<f64> {
        let r = rotation(theta);
        Matrix3::new(r[(0, 0)], r[(0, 1)], 0.0, r[(1, 0)], r[(1, 1)], 0.0, 0.0, 0.0, 1.0)
    }
}

/// G = (0, 0, ξ·(DK₀ξ) + aη₁ − bη₂).
pub fn weakly_gyroscopic_g(md: &ModulationData, xi: V2, eta: V2) -> V3 {
    let g = md.grad;
    V3::new(0.0, 0.0, xi.dot(&g.apply(xi)) + g.a * eta.x - g.b * eta.y)
}

/// ε-scaled coefficients used by the expansions.
struct Scaled {
    m: [[f64; 5]; 5],
    s: f64,
    xg: V2,
    m6: f64,
    m7: f64,
    flat: Matrix2<f64>,
}

impl Scaled {
    fn new(mass: &MassData, eps: f64) -> Self {
        let mut m = [[0.0; 5]; 5];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = mass.mij_eps(i + 1, j + 1, eps);
            }
        }
        let mo = mass.moments.scaled(eps);
        Scaled { m, s: mo.area, xg: mo.xg(), m6: mo.m6, m7: mo.m7, flat: mass.m_flat * (eps * eps) }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.m[i - 1][j - 1]
    }
}

/// Small-ε approximation of (B₁, B₂, B₃) from K₀, DK₀, ℓ and r.
pub fn expansion_b(mass: &MassData, eps: f64, md: &ModulationData, ell: V2, r: f64) -> V3 {
    let c = Scaled::new(mass, eps);
    let m = |i, j| c.at(i, j);
    let (s, g1, g2) = (c.s, c.xg.x, c.xg.y);
    let (a, b, k0) = (md.grad.a, md.grad.b, md.k0);
    let (l1, l2) = (ell.x, ell.y);
    let first = (c.flat + Matrix2::identity() * s) * perp(k0) * r
        - V2::new(-(m(1, 1) + s) * a + m(1, 2) * b, -m(2, 1) * a + (m(2, 2) + s) * b) * l1
        - V2::new(m(1, 2) * a + (m(1, 1) + s) * b, (m(2, 2) + s) * a + m(2, 1) * b) * l2
        - V2::new(m(1, 5) + s * g2, m(2, 5) + s * g1) * (2.0 * r * a)
        - V2::new(-m(1, 4) + s * g1, -m(2, 4) - s * g2) * (2.0 * r * b);
    let third = r * (V2::new(m(3, 2), -m(3, 1)) + c.xg * s).dot(&k0)
        - l1 * ((-m(3, 1) + s * g2) * a + (m(3, 2) + s * g1) * b)
        - l2 * ((m(3, 2) + s * g1) * a + (m(3, 1) - s * g2) * b)
        - 2.0 * r * a * (m(3, 5) + c.m6)
        + 2.0 * r * b * (m(3, 4) + c.m7);
    V3::new(first.x, first.y, third)
}

/// Small-ε approximation of C_a.
pub fn expansion_c_a(mass: &MassData, eps: f64, md: &ModulationData, ell: V2, r: f64) -> V3 {
    let c = Scaled::new(mass, eps);
    let m = |i, j| c.at(i, j);
    let (s, g1, g2) = (c.s, c.xg.x, c.xg.y);
    let (a, b, k0) = (md.grad.a, md.grad.b, md.k0);
    let (l1, l2) = (ell.x, ell.y);
    let d = k0 - ell;
    let first = V2::new(-m(3, 2), m(3, 1)) * (r * r) - perp(c.flat * d + k0 * s) * r
        - V2::new((m(1, 1) + s) * a - m(1, 2) * b, -m(1, 2) * a - (m(1, 1) + s) * b) * l1
        - V2::new(m(2, 1) * a - (m(2, 2) + s) * b, -(m(2, 2) + s) * a - m(2, 1) * b) * l2
        + V2::new(-m(3, 1) + m(4, 2) + 2.0 * s * g2, m(3, 2) - m(4, 1) + 2.0 * s * g1) * (a * r)
        + V2::new(m(3, 2) + m(5, 2) + 2.0 * s * g1, m(3, 1) - m(5, 1) - 2.0 * s * g2) * (b * r);
    let third = perp(d).dot(&(c.flat * d)) + r * d.dot(&V2::new(-m(3, 2), m(3, 1))) - r * s * k0.dot(&c.xg)
        + l1 * (a * (-m(4, 2) + s * g2 + 2.0 * m(1, 5)) + b * (-m(5, 2) + s * g1 - 2.0 * m(1, 4)))
        + l2 * (a * (m(4, 1) + s * g1 + 2.0 * m(2, 5)) + b * (m(5, 1) - s * g2 - 2.0 * m(2, 4)))
        + 2.0 * r * a * (m(3, 5) + c.m6)
        - 2.0 * r * b * (m(3, 4) + c.m7);
    V3::new(first.x, first.y, third)
}

/// Small-ε approximation of C_b.
pub fn expansion_c_b(mass: &MassData, eps: f64, md: &ModulationData, ell: V2, r: f64, gamma: f64) -> V3 {
    let (xi, eta) = (mass.xi, mass.eta);
    let (a, b) = (md.grad.a, md.grad.b);
    let d = md.k0 - ell;
    let first = (perp(d) + xi * (eps * r) + perp(md.grad.apply(xi)) * eps) * gamma;
    let third = gamma * eps * xi.dot(&d) + gamma * eps * eps * (-a * eta.x + b * eta.y);
    V3::new(first.x, first.y, third)
}

/// v_#(x) = K₀ + DK₀·x + Σ_{i=1,2} (ℓ − K₀)_i ∇Φ_i^ε − a∇Φ₄^ε − b∇Φ₅^ε.
pub fn v_sharp(sys: &CoupledSystem, md: &ModulationData, ell: V2, x: V2) -> V2 {
    let eps = sys.eps();
    let pot = &sys.pot;
    let d = ell - md.k0;
    md.k0 + md.grad.apply(x) + pot.grad_phi_eps(1, eps, x) * d.x + pot.grad_phi_eps(2, eps, x) * d.y
        - pot.grad_phi_eps(4, eps, x) * md.grad.a
        - pot.grad_phi_eps(5, eps, x) * md.grad.b
}

/// ‖v_# + r∇Φ₃^ε − ṽ^ε‖ in L²(∂S₀^ε), from the boundary traces.
pub fn boundary_remainder_l2(sys: &CoupledSystem, state: &CoupledState) -> f64 {
    let eps = sys.eps();
    let pot = &sys.pot;
    let md = modulation(sys, state);
    let flow = BodyFlow::new(pot, eps, &state.field, sys.params.gamma, state.ell, state.r).expect("blobs outside the body");
    let vt = flow.boundary_v_tilde();
    let g: Vec<Vec<V2>> = (1..=5).map(|i| pot.boundary_grad_phi_eps(i, eps)).collect();
    let mesh = &sys.mesh_eps;
    let d = state.ell - md.k0;
    mesh.integrate(|j| {
        let x = mesh.points[j];
        let vs = md.k0 + md.grad.apply(x) + g[0][j] * d.x + g[1][j] * d.y - g[3][j] * md.grad.a - g[4][j] * md.grad.b;
        (vs + g[2][j] * state.r - vt[j]).norm_squared()
    })
    .sqrt()
}

/// p̃ series along dense samples.
pub fn p_tilde_series(eps: f64, xi: V2, dense: &[DenseSample]) -> Vec<V3> {
    dense.iter().map(|s| modulation_of_sample(eps, xi, s).p_tilde).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub t: Vec<f64>,
    pub f: Vec<[f64; 3]>,
    pub p_tilde_norm: Vec<f64>,
    /// max_t |F| / (1 + |p̃| + ε|p̃|²).
    pub fitted_c: f64,
    pub max_residual: f64,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub series: ResidualSeries,
    /// Fitted constant at twice the differencing stride.
    pub coarse_fitted_c: f64,
    /// Set when the fitted constant moves by more than 10% between strides.
    pub noise_flag: bool,
}

/// F_implied = ε^{−min(α,2)}[(ε^αM_g + ε²M_a)p̃′ + ⟨ε^{α−1}Λ_g + εΛ_a, p̃, p̃⟩ − γp̃×B − εγG]
/// with p̃′ by centered differences over `stride` samples.
pub fn residual_series(tensors: &StructureTensors, eps: f64, alpha: f64, gamma: f64, dense: &[DenseSample], stride: usize) -> ResidualSeries {
    assert!(stride >= 1);
    let p = p_tilde_series(eps, tensors.xi, dense);
    let mass = tensors.modulated_mass(eps, alpha);
    let bv = tensors.b_vector();
    let scale = eps.powf(-alpha.min(2.0));
    let mut out = ResidualSeries { t: Vec::new(), f: Vec::new(), p_tilde_norm: Vec::new(), fitted_c: 0.0, max_residual: 0.0, stride };
    if dense.len() <= 2 * stride {
        return out;
    }
    for i in stride..dense.len() - stride {
        let dt = dense[i + stride].t - dense[i - stride].t;
        let dp = (p[i + stride] - p[i - stride]) / dt;
        let md = modulation_of_sample(eps, tensors.xi, &dense[i]);
        let pt = p[i];
        let lhs = mass * dp + tensors.quadratic(Lambda::G, pt) * eps.powf(alpha - 1.0) + tensors.quadratic(Lambda::A, pt) * eps;
        let rhs = cross(pt, bv) * gamma + weakly_gyroscopic_g(&md, tensors.xi, tensors.eta) * (eps * gamma);
        let f = (lhs - rhs) * scale;
        let n = pt.norm();
        out.t.push(dense[i].t);
        out.f.push([f.x, f.y, f.z]);
        out.p_tilde_norm.push(n);
        out.max_residual = out.max_residual.max(f.norm());
        out.fitted_c = out.fitted_c.max(f.norm() / (1.0 + n + eps * n * n));
    }
    out
}

pub fn normal_form_residual(tensors: &StructureTensors, eps: f64, alpha: f64, gamma: f64, dense: &[DenseSample]) -> ResidualReport {
    let series = residual_series(tensors, eps, alpha, gamma, dense, 1);
    let coarse = residual_series(tensors, eps, alpha, gamma, dense, 2);
    let noise_flag = (coarse.fitted_c - series.fitted_c).abs() > 0.1 * series.fitted_c.max(f64::MIN_POSITIVE);
    ResidualReport { coarse_fitted_c: coarse.fitted_c, noise_flag, series }
}

/// max over interior samples of |P♭Q_θ{(ε^αM_g + ε²M_a)p̃′ + ⟨ε^{α−1}Λ_g + εΛ_a, p̃, p̃⟩}
/// − P♭[(ε^αM_gQ_θ + ε²Q_θM_a)p̃]′|, both derivatives by centered differences.
pub fn rotated_mass_identity_check(tensors: &StructureTensors, eps: f64, alpha: f64, dense: &[DenseSample]) -> f64 {
    let p = p_tilde_series(eps, tensors.xi, dense);
    let mass = tensors.modulated_mass(eps, alpha);
    let ea = eps.powf(alpha);
    let rotated: Vec<V3> = dense
        .iter()
        .zip(&p)
        .map(|(s, pt)| {
            let q = StructureTensors::q_theta(s.theta);
            (tensors.m_g * q * ea + q * tensors.m_a * (eps * eps)) * pt
        })
        .collect();
    let mut worst: f64 = 0.0;
    for i in 1..dense.len().saturating_sub(1) {
        let dt = dense[i + 1].t - dense[i - 1].t;
        let dp = (p[i + 1] - p[i - 1]) / dt;
        let pt = p[i];
        let inner = mass * dp + tensors.quadratic(Lambda::G, pt) * eps.powf(alpha - 1.0) + tensors.quadratic(Lambda::A, pt) * eps;
        let lhs = StructureTensors::q_theta(dense[i].theta) * inner;
        let rhs = (rotated[i + 1] - rotated[i - 1]) / dt;
        worst = worst.max((lhs - rhs).fixed_rows::<2>(0).norm());
    }
    worst
}

/// max_t (|ℓ| + ε|r|).
pub fn modulated_energy_bound(eps: f64, dense: &[DenseSample]) -> f64 {
    dense.iter().map(|s| s.ell.norm() + eps * s.r.abs()).fold(0.0, f64::max)
}

/// max_t |d/dt[K₀ + εDK₀ξ] + rK₀^⊥| / (1 + |p̃|), derivative by centered differences.
pub fn modulation_drift_constant(eps: f64, xi: V2, dense: &[DenseSample]) -> f64 {
    let m: Vec<V2> = dense.iter().map(|s| s.k0 + modulation_of_sample(eps, xi, s).grad.apply(xi) * eps).collect();
    let mut c: f64 = 0.0;
    for i in 1..dense.len().saturating_sub(1) {
        let dt = dense[i + 1].t - dense[i - 1].t;
        let d = (m[i + 1] - m[i - 1]) / dt + perp(dense[i].k0) * dense[i].r;
        let pt = modulation_of_sample(eps, xi, &dense[i]).p_tilde;
        c = c.max(d.norm() / (1.0 + pt.norm()));
    }
    c
}

/// Smallest C with |∫₀ᵗ p̃·G ds| ≤ εC(1 + t + ∫₀ᵗ|p̃|²) along the samples (trapezoidal sums).
pub fn weakly_gyroscopic_constant(tensors: &StructureTensors, eps: f64, dense: &[DenseSample]) -> f64 {
    let mut work = 0.0;
    let mut energy = 0.0;
    let mut c: f64 = 0.0;
    let integrand = |s: &DenseSample| {
        let md = modulation_of_sample(eps, tensors.xi, s);
        (md.p_tilde.dot(&weakly_gyroscopic_g(&md, tensors.xi, tensors.eta)), md.p_tilde.norm_squared())
    };
    let t0 = dense.first().map(|s| s.t).unwrap_or(0.0);
    for w in dense.windows(2) {
        let dt = w[1].t - w[0].t;
        let (g0, e0) = integrand(&w[0]);
        let (g1, e1) = integrand(&w[1]);
        work += 0.5 * dt * (g0 + g1);
        energy += 0.5 * dt * (e0 + e1);
        c = c.max(work.abs() / (eps * (1.0 + (w[1].t - t0) + energy)));
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biotsavart::{lattice_fill, BlobField, Frame, PatchSpec};
    use crate::coupled_system::{force_b, force_c, CoupledParams};
    use crate::geometry::ShapeSpec;
    use crate::potential::PotentialSet;
    use proptest::prelude::*;

    fn tensors(shape: &ShapeSpec) -> (PotentialSet, StructureTensors) {
        let pot = PotentialSet::solve(shape, 64).unwrap();
        let t = StructureTensors::new(&pot.mass, &GenuineMass { m1: 1.2, j1: 0.5 });
        (pot, t)
    }

    fn generic_shape() -> ShapeSpec {
        ShapeSpec::perturbed_disk(1.0, &[(2, 0.12, 0.05), (3, 0.05, -0.03)]).unwrap().with_mass_offset([0.04, -0.02]).unwrap()
    }

    #[test]
    fn modulation_trivial_cases() {
        let z = GradientSample::zero();
        let md = modulation_from(0.1, V2::new(0.3, 0.2), V2::new(1.0, 2.0), 0.5, V2::zeros(), z);
        assert_eq!(md.ell_tilde, V2::new(1.0, 2.0));
        let ring: Vec<V2> = (0..12).map(|k| rotation(k as f64 * std::f64::consts::PI / 6.0) * V2::new(1.0, 0.0)).collect();
        let f = BlobField::new(ring, vec![0.4; 12], 0.05, Frame::Body).unwrap();
        let (k0, g) = origin_flow(&f);
        assert!(k0.norm() < 1e-15 && g.a.abs() < 1e-15 && g.b.abs() < 1e-15);
    }

    #[test]
    fn modulation_strain_term_matches_finite_differences() {
        let f = lattice_fill(&[PatchSpec::Disk { center: [1.0, 0.5], radius: 0.3, density: 2.0 }], 0.05, 0.05, Frame::Body).unwrap();
        let xi = V2::new(0.13, -0.07);
        let eps = 0.1;
        let (k0, g) = origin_flow(&f);
        let md = modulation_from(eps, xi, V2::zeros(), 0.0, k0, g);
        let h = 1e-4;
        let fd = (crate::biotsavart::velocity_free_space(&f, xi * h) - crate::biotsavart::velocity_free_space(&f, -xi * h)) / (2.0 * h);
        assert!(((-md.ell_tilde - k0) - fd * eps).norm() < 1e-8);
    }

    #[test]
    fn disk_has_no_gyroscopic_corrections() {
        let (_, t) = tensors(&ShapeSpec::disk(1.0).unwrap());
        assert!(t.mu.norm() < 1e-10 && t.xi.norm() < 1e-10 && t.eta.norm() < 1e-10);
        let p = V3::new(0.3, -1.2, 0.7);
        assert!((t.quadratic(Lambda::A, p) - t.quadratic(Lambda::Under, p)).norm() < 1e-9);
        let md = modulation_from(0.1, t.xi, V2::new(1.0, 0.0), 0.0, V2::zeros(), GradientSample { a: 0.3, b: -0.2, flagged: false });
        assert!(weakly_gyroscopic_g(&md, t.xi, t.eta).norm() < 1e-9);
    }

    #[test]
    fn lambda_g_vanishes_without_rotation() {
        let (_, t) = tensors(&generic_shape());
        assert_eq!(t.quadratic(Lambda::G, V3::new(0.4, 0.9, 0.0)), V3::zeros());
    }

    proptest! {
        #[test]
        fn gyroscopic_terms_do_no_work(p in prop::array::uniform3(-10.0f64..10.0)) {
            let (_, t) = tensors(&ShapeSpec::ellipse(1.0, 0.6).unwrap());
            let p = V3::from(p);
            let scale = p.norm_squared() * p.norm() + 1.0;
            for which in [Lambda::G, Lambda::A] {
                prop_assert!(t.quadratic(which, p).dot(&p).abs() < 1e-13 * scale);
            }
        }

        #[test]
        fn polarization_is_symmetric_bilinear(p in prop::array::uniform3(-5.0f64..5.0), q in prop::array::uniform3(-5.0f64..5.0), c in -3.0f64..3.0) {
            let (_, t) = tensors(&ShapeSpec::ellipse(1.0, 0.6).unwrap());
            let (p, q) = (V3::from(p), V3::from(q));
            for which in [Lambda::G, Lambda::Under, Lambda::A] {
                let pq = t.bilinear(which, p, q);
                prop_assert!((pq - t.bilinear(which, q, p)).norm() < 1e-12 * (1.0 + pq.norm()));
                prop_assert!((t.bilinear(which, p * c, q) - pq * c).norm() < 1e-11 * (1.0 + pq.norm()));
                prop_assert!((t.bilinear(which, p, p) - t.quadratic(which, p)).norm() < 1e-11 * (1.0 + p.norm_squared()));
            }
        }

        #[test]
        fn cross_product_is_antisymmetric(p in prop::array::uniform3(-5.0f64..5.0), q in prop::array::uniform3(-5.0f64..5.0)) {
            let (p, q) = (V3::from(p), V3::from(q));
            prop_assert!((cross(p, q) + cross(q, p)).norm() < 1e-12);
            prop_assert!(cross(p, q).dot(&p).abs() < 1e-11 * (1.0 + p.norm_squared() * q.norm()));
        }
    }

    #[test]
    fn expansions_vanish_without_flow() {
        let (pot, _) = tensors(&generic_shape());
        let md = modulation_from(0.1, pot.mass.xi, V2::zeros(), 0.0, V2::zeros(), GradientSample::zero());
        assert_eq!(expansion_b(&pot.mass, 0.1, &md, V2::zeros(), 0.0), V3::zeros());
        assert_eq!(expansion_c_a(&pot.mass, 0.1, &md, V2::zeros(), 0.0), V3::zeros());
        assert_eq!(expansion_c_b(&pot.mass, 0.1, &md, V2::zeros(), 0.0, 2.0), V3::zeros());
        let params = CoupledParams { eps: 0.1, alpha: 2.0, genuine: GenuineMass { m1: 1.0, j1: 1.0 }, gamma: 2.0 };
        let sys = CoupledSystem::new(pot, params, 1.0).unwrap();
        let st = CoupledState::at_rest(BlobField::empty(0.1, Frame::Body));
        assert_eq!(force_b(&sys, &st).unwrap(), V3::zeros());
    }

    #[test]
    fn disk_circulation_expansion() {
        let pot = PotentialSet::solve(&ShapeSpec::disk(1.0).unwrap(), 64).unwrap();
        let (eps, gamma, ell) = (0.1, 1.5, V2::new(0.7, 0.2));
        let params = CoupledParams { eps, alpha: 2.0, genuine: GenuineMass { m1: 1.0, j1: 1.0 }, gamma };
        let md = modulation_from(eps, pot.mass.xi, ell, 0.0, V2::zeros(), GradientSample::zero());
        let approx = expansion_c_b(&pot.mass, eps, &md, ell, 0.0, gamma);
        let sys = CoupledSystem::new(pot, params, 1.0).unwrap();
        let st = CoupledState { ell, ..CoupledState::at_rest(BlobField::empty(0.1, Frame::Body)) };
        let (_, cb, _) = force_c(&sys, &st).unwrap();
        assert!((cb - approx).norm() < 1e-8);
    }

    #[test]
    fn residual_at_rest_is_zero() {
        let (pot, t) = tensors(&generic_shape());
        let rest = DenseSample {
            t: 0.0,
            h: V2::zeros(),
            theta: 0.4,
            ell: V2::zeros(),
            r: 0.0,
            ell_dot: V2::zeros(),
            r_dot: 0.0,
            k0: V2::zeros(),
            a: 0.0,
            b: 0.0,
            flagged: false,
        };
        let dense: Vec<DenseSample> = (0..10).map(|k| DenseSample { t: k as f64 * 0.1, ..rest }).collect();
        let rep = normal_form_residual(&t, 0.1, 2.0, 0.0, &dense);
        assert_eq!(rep.series.max_residual, 0.0);
        assert_eq!(rotated_mass_identity_check(&t, 0.1, 2.0, &dense), 0.0);
        assert_eq!(weakly_gyroscopic_constant(&t, 0.1, &dense), 0.0);
        assert_eq!(modulated_energy_bound(0.1, &dense), 0.0);
        let _ = pot;
    }

    #[test]
    fn rotated_identity_holds_for_spin_only_motion() {
        let (_, t) = tensors(&ShapeSpec::disk(1.0).unwrap());
        let (eps, r) = (0.1, 3.0);
        let spin = |dt: f64| -> Vec<DenseSample> {
            (0..100)
                .map(|k| {
                    let tt = k as f64 * dt;
                    DenseSample {
                        t: tt,
                        h: V2::zeros(),
                        theta: r * tt,
                        ell: rotation(-r * tt) * V2::new(1.0, 0.5),
                        r,
                        ell_dot: V2::zeros(),
                        r_dot: 0.0,
                        k0: V2::zeros(),
                        a: 0.0,
                        b: 0.0,
                        flagged: false,
                    }
                })
                .collect()
        };
        let err = rotated_mass_identity_check(&t, eps, 2.0, &spin(0.01));
        let fine = rotated_mass_identity_check(&t, eps, 2.0, &spin(0.005));
        assert!((err / fine - 4.0).abs() < 0.1, "{err} {fine}");
    }
}
