//! Exterior Laplace problems on the body boundary: Kirchhoff potentials
//! Φ₁..Φ₅, the harmonic field H with its stream function, added-mass
//! coefficients, the conformal centre ξ, η and Laurent expansions.
//!
//! Every exterior harmonic function is represented by a single layer
//! u = Sσ with G₀(x, y) = −(1/2π) ln|x − y|. The weakly singular boundary
//! operator uses Kress product quadrature for the logarithm and the normal
//! derivative is taken from the exterior limit ∂_n u = σ/2 + K σ, where n is
//! the mesh normal (pointing into the solid). All solves happen at body scale
//! 1 and the scale-ε objects are produced by the exact scaling laws.

use crate::contour::{hat, unhat, ComplexTrace, IdentityReport, Weight};
use crate::geometry::{build_mesh, geometric_moments, perp, to_complex, BoundaryMesh, GeometryError, MomentSet, ShapeSpec, V2};
use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

const INV_2PI: f64 = 0.5 / PI;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PotentialError {
    #[error("incompatible Neumann data: ∮ g ds = {0:e}")]
    Incompatible(f64),
    #[error("boundary integral system is singular")]
    Singular,
    #[error("extraction circle of radius {radius} meets the body (circumradius {circumradius})")]
    CircleMeetsBody { radius: f64, circumradius: f64 },
    #[error("reference point {0:?} is not inside the body")]
    CenterOutside([f64; 2]),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Dense boundary operators of one mesh at body scale 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExteriorSolver {
    pub shape: ShapeSpec,
    pub mesh: BoundaryMesh,
    /// (½I + K)⁻¹: Neumann data ↦ single-layer density.
    a_inv: DMatrix<f64>,
    /// Kress-quadrature single layer on the boundary.
    s_h: DMatrix<f64>,
    /// Double-layer-adjoint part K (without the ½ jump).
    k: DMatrix<f64>,
    /// Neumann data ↦ tangential derivative of the potential on the boundary.
    tangential: DMatrix<f64>,
    /// Neumann data ↦ boundary values of the potential.
    trace: DMatrix<f64>,
    /// Inverse of the bordered Dirichlet matrix [[S, 1], [wᵀ, 0]].
    dirichlet_inv: DMatrix<f64>,
}

/// Kress weights R(k) of ∫ ln(4 sin²((t_i − t)/2)) f(t) dt ≈ Σ R(i−j) f_j.
fn kress_weights(n_nodes: usize) -> Vec<f64> {
    let n = n_nodes / 2;
    let nf = n as f64;
    (0..n_nodes)
        .map(|k| {
            let s: f64 = (1..n).map(|m| (2.0 * PI * (m * k) as f64 / n_nodes as f64).cos() / m as f64).sum();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            -2.0 * PI / nf * s - PI / (nf * nf) * sign
        })
        .collect()
}

/// Fourier spectral differentiation matrix on N equispaced periodic nodes.
fn spectral_derivative(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let d = i as i64 - j as i64;
            let sign = if d.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            0.5 * sign / (d as f64 * PI / n as f64).tan()
        }
    })
}

/// Periodic sinc interpolation weights of node j at parameter t.
fn periodic_sinc(n: usize, t: f64, j: usize) -> f64 {
    let x = t - 2.0 * PI * j as f64 / n as f64;
    let half = 0.5 * x;
    if half.sin().abs() < 1e-14 {
        return 1.0;
    }
    (n as f64 * half).sin() / (n as f64 * half.tan())
}

fn interpolate_periodic(values: &[f64], m: usize) -> Vec<f64> {
    let n = values.len();
    if m == n {
        return values.to_vec();
    }
    (0..m)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / m as f64;
            values.iter().enumerate().map(|(j, v)| v * periodic_sinc(n, t, j)).sum()
        })
        .collect()
}

/// Nodes of a refined quadrature used close to the boundary.
struct FineNodes {
    points: Vec<V2>,
    weights: Vec<f64>,
    dz: Vec<Complex64>,
}

impl ExteriorSolver {
    pub fn new(shape: &ShapeSpec, n: usize) -> Result<Self, PotentialError> {
        let mesh = build_mesh(shape, n)?;
        let r = kress_weights(n);
        let idx = |i: usize, j: usize| (i + n - j) % n;
        let s_h = DMatrix::from_fn(n, n, |i, j| {
            let l2 = if i == j {
                mesh.speed[i].ln()
            } else {
                let dt = PI * (i as f64 - j as f64) / n as f64;
                0.5 * ((mesh.points[i] - mesh.points[j]).norm_squared() / (4.0 * dt.sin().powi(2))).ln()
            };
            -INV_2PI * (0.5 * r[idx(i, j)] * mesh.speed[j] + l2 * mesh.weights[j])
        });
        let k = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                mesh.accel[i].dot(&mesh.normals[i]) / (4.0 * PI * mesh.speed[i].powi(2)) * mesh.weights[i]
            } else {
                let d = mesh.points[i] - mesh.points[j];
                -INV_2PI * d.dot(&mesh.normals[i]) / d.norm_squared() * mesh.weights[j]
            }
        });
        let a = DMatrix::<f64>::identity(n, n) * 0.5 + &k;
        let a_inv = a.try_inverse().ok_or(PotentialError::Singular)?;
        let trace = &s_h * &a_inv;
        let mut tangential = spectral_derivative(n) * &trace;
        for i in 0..n {
            tangential.row_mut(i).scale_mut(1.0 / mesh.speed[i]);
        }
        let mut bordered = DMatrix::<f64>::zeros(n + 1, n + 1);
        bordered.view_mut((0, 0), (n, n)).copy_from(&s_h);
        for i in 0..n {
            bordered[(i, n)] = 1.0;
            bordered[(n, i)] = mesh.weights[i];
        }
        let dirichlet_inv = bordered.try_inverse().ok_or(PotentialError::Singular)?;
        Ok(ExteriorSolver { shape: shape.clone(), mesh, a_inv, s_h, k, tangential, trace, dirichlet_inv })
    }

    pub fn n(&self) -> usize {
        self.mesh.n
    }

    /// Exterior Neumann problem ∂_n u = g, u → 0 at infinity.
    pub fn solve_neumann(&self, g: &[f64]) -> Result<NeumannSolution, PotentialError> {
        let flux = self.mesh.integrate(|j| g[j]);
        let scale = self.mesh.integrate(|j| g[j].abs()).max(1.0);
        if flux.abs() > 1e-10 * scale {
            return Err(PotentialError::Incompatible(flux));
        }
        Ok(self.solve_neumann_unchecked(g))
    }

    /// Neumann solve after projecting out the (quadrature-level) mean flux.
    pub fn solve_neumann_unchecked(&self, g: &[f64]) -> NeumannSolution {
        let mean = self.mesh.integrate(|j| g[j]) / self.mesh.perimeter();
        let gv = DVector::from_iterator(self.n(), g.iter().map(|v| v - mean));
        let sigma = &self.a_inv * &gv;
        let values = &self.trace * &gv;
        let dtau = &self.tangential * &gv;
        let boundary_grad = (0..self.n()).map(|j| self.mesh.normals[j] * gv[j] + self.mesh.tangents[j] * dtau[j]).collect();
        let residual = (&self.k * &sigma + &sigma * 0.5 - &gv).amax();
        NeumannSolution {
            sigma: sigma.as_slice().to_vec(),
            boundary_values: values.as_slice().to_vec(),
            boundary_grad,
            data: gv.as_slice().to_vec(),
            residual,
        }
    }

    /// Boundary gradient trace of the Neumann solution with data g, without
    /// forming the density (g must be compatible).
    pub fn neumann_boundary_gradient(&self, g: &[f64]) -> Vec<V2> {
        let gv = DVector::from_column_slice(g);
        let dtau = &self.tangential * &gv;
        (0..self.n()).map(|j| self.mesh.normals[j] * g[j] + self.mesh.tangents[j] * dtau[j]).collect()
    }

    /// Density σ and constant C with Sσ + C = f on the boundary and ∮σ = total.
    pub fn solve_dirichlet(&self, f: &[f64], total: f64) -> (Vec<f64>, f64) {
        let n = self.n();
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from_slice(f);
        rhs[n] = total;
        let sol = &self.dirichlet_inv * rhs;
        (sol.rows(0, n).iter().cloned().collect(), sol[n])
    }

    /// Exterior limit of ∂_n(Sσ) on the boundary.
    pub fn normal_derivative(&self, sigma: &[f64]) -> Vec<f64> {
        let s = DVector::from_column_slice(sigma);
        let kd = &self.k * &s;
        (0..self.n()).map(|i| 0.5 * s[i] + kd[i]).collect()
    }

    fn fine_nodes(&self, factor: usize) -> FineNodes {
        let m = self.n() * factor;
        let h = 2.0 * PI / m as f64;
        let mut out = FineNodes { points: Vec::with_capacity(m), weights: Vec::with_capacity(m), dz: Vec::with_capacity(m) };
        for k in 0..m {
            let (z, dz, _) = self.shape.eval(h * k as f64);
            out.points.push(V2::new(z.re, z.im));
            out.weights.push(h * dz.norm());
            out.dz.push(dz * h);
        }
        out
    }

    fn refinement(&self, x: V2) -> usize {
        let d = self.mesh.distance_to(x);
        let h = self.mesh.max_panel();
        if d > 5.0 * h {
            1
        } else {
            ((5.0 * h / d.max(1e-300)).ceil() as usize).clamp(2, 32)
        }
    }

    /// Single-layer potential Sσ(x) at an exterior point.
    pub fn layer_value(&self, sigma: &[f64], x: V2) -> f64 {
        let factor = self.refinement(x);
        if factor == 1 {
            return -INV_2PI * (0..self.n()).map(|j| (x - self.mesh.points[j]).norm().ln() * sigma[j] * self.mesh.weights[j]).sum::<f64>();
        }
        let fine = self.fine_nodes(factor);
        let s = interpolate_periodic(sigma, fine.points.len());
        -INV_2PI * (0..fine.points.len()).map(|j| (x - fine.points[j]).norm().ln() * s[j] * fine.weights[j]).sum::<f64>()
    }

    /// ∇(Sσ)(x) far from the boundary by direct quadrature.
    fn layer_gradient_direct(&self, sigma: &[f64], x: V2) -> V2 {
        let mut acc = V2::zeros();
        for j in 0..self.n() {
            let d = x - self.mesh.points[j];
            acc += d * (sigma[j] * self.mesh.weights[j] / d.norm_squared());
        }
        -acc * INV_2PI
    }

    /// Exterior Cauchy integral of a boundary hat-trace that vanishes at
    /// infinity, in barycentric form, on a refined copy of the boundary.
    fn cauchy_exterior(&self, trace: &[V2], x: V2) -> V2 {
        let factor = self.refinement(x).max(4);
        let fine = self.fine_nodes(factor);
        let m = fine.points.len();
        let re: Vec<f64> = trace.iter().map(|v| v.x).collect();
        let im: Vec<f64> = trace.iter().map(|v| -v.y).collect();
        let (re, im) = (interpolate_periodic(&re, m), interpolate_periodic(&im, m));
        let zx = to_complex(x);
        let (mut num, mut den) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for k in 0..m {
            let c = fine.dz[k] / (to_complex(fine.points[k]) - zx);
            num += Complex64::new(re[k], im[k]) * c;
            den += c;
        }
        unhat(num / (den - Complex64::new(0.0, 2.0 * PI)))
    }

    /// Gradient of a decaying exterior harmonic function given its density and
    /// its boundary gradient trace.
    pub fn gradient(&self, sigma: &[f64], boundary_grad: &[V2], x: V2) -> V2 {
        if self.refinement(x) == 1 {
            self.layer_gradient_direct(sigma, x)
        } else {
            self.cauchy_exterior(boundary_grad, x)
        }
    }
}

/// Exterior potential with prescribed normal derivative, vanishing at infinity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeumannSolution {
    pub sigma: Vec<f64>,
    /// Potential at the mesh nodes.
    pub boundary_values: Vec<f64>,
    /// Full gradient at the mesh nodes (exterior limit).
    pub boundary_grad: Vec<V2>,
    /// Normal data actually solved for (after removing the mean).
    pub data: Vec<f64>,
    /// max |(½I + K)σ − g|.
    pub residual: f64,
}

impl NeumannSolution {
    pub fn value(&self, solver: &ExteriorSolver, x: V2) -> f64 {
        solver.layer_value(&self.sigma, x)
    }

    pub fn gradient(&self, solver: &ExteriorSolver, x: V2) -> V2 {
        solver.gradient(&self.sigma, &self.boundary_grad, x)
    }
}

/// H¹ = ∇^⊥Ψ_H with Ψ_H = (1/2π) ln|x − c| + Sσ + C vanishing on the boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarmonicField {
    pub center: V2,
    pub sigma: Vec<f64>,
    pub constant: f64,
    /// H at the mesh nodes.
    pub boundary_h: Vec<V2>,
}

pub fn harmonic_field(solver: &ExteriorSolver, center: V2) -> Result<HarmonicField, PotentialError> {
    let mesh = &solver.mesh;
    if !mesh.contains(center) {
        return Err(PotentialError::CenterOutside([center.x, center.y]));
    }
    let f: Vec<f64> = mesh.points.iter().map(|p| -INV_2PI * (p - center).norm().ln()).collect();
    let (sigma, constant) = solver.solve_dirichlet(&f, 0.0);
    let dn = solver.normal_derivative(&sigma);
    let boundary_h = (0..mesh.n)
        .map(|j| {
            let d = mesh.points[j] - center;
            let dpsi = INV_2PI * d.dot(&mesh.normals[j]) / d.norm_squared() + dn[j];
            mesh.tangents[j] * (-dpsi)
        })
        .collect();
    Ok(HarmonicField { center, sigma, constant, boundary_h })
}

impl HarmonicField {
    pub fn stream(&self, solver: &ExteriorSolver, x: V2) -> f64 {
        INV_2PI * (x - self.center).norm().ln() + solver.layer_value(&self.sigma, x) + self.constant
    }

    pub fn velocity(&self, solver: &ExteriorSolver, x: V2) -> V2 {
        if solver.refinement(x) == 1 {
            let d = x - self.center;
            perp(d * (INV_2PI / d.norm_squared()) + solver.layer_gradient_direct(&self.sigma, x))
        } else {
            solver.cauchy_exterior(&self.boundary_h, x)
        }
    }
}

/// Regular part g(x, y) = G(x, y) − (1/2π) ln|x − y| of the exterior
/// Dirichlet Green function, for a fixed source y.
#[derive(Debug, Clone)]
pub struct GreenRegular {
    pub sigma: Vec<f64>,
    pub constant: f64,
}

impl GreenRegular {
    pub fn new(solver: &ExteriorSolver, y: V2) -> Self {
        let f: Vec<f64> = solver.mesh.points.iter().map(|p| -INV_2PI * (p - y).norm().ln()).collect();
        let (sigma, constant) = solver.solve_dirichlet(&f, 1.0);
        GreenRegular { sigma, constant }
    }

    pub fn value(&self, solver: &ExteriorSolver, x: V2) -> f64 {
        solver.layer_value(&self.sigma, x) + self.constant
    }
}

/// Genuine mass m¹ and inertia J¹ of the body at scale 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenuineMass {
    pub m1: f64,
    pub j1: f64,
}

impl GenuineMass {
    /// M_g = diag(m¹, m¹, J¹).
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(self.m1, self.m1, self.j1))
    }
}

/// I_ε = diag(1, 1, ε).
pub fn i_eps(eps: f64) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, eps))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MassData {
    /// m_{ij} at scale 1, i, j ∈ 1..5 stored 0-based.
    pub m: [[f64; 5]; 5],
    pub m_a: Matrix3<f64>,
    pub m_flat: Matrix2<f64>,
    pub xi: V2,
    pub eta: V2,
    pub mu: Vector3<f64>,
    pub mu_hat: Vector3<f64>,
    pub mu_check: Vector3<f64>,
    pub moments: MomentSet,
}

impl MassData {
    /// m_{ij} with 1-based indices.
    pub fn mij(&self, i: usize, j: usize) -> f64 {
        self.m[i - 1][j - 1]
    }

    /// m^ε_{ij} = ε^{2+δ_{i≥3}+δ_{j≥3}} m¹_{ij}.
    pub fn mij_eps(&self, i: usize, j: usize, eps: f64) -> f64 {
        let p = 2 + (i >= 3) as i32 + (j >= 3) as i32;
        eps.powi(p) * self.mij(i, j)
    }

    /// M^ε_a = ε² I_ε M_a I_ε.
    pub fn added_mass_eps(&self, eps: f64) -> Matrix3<f64> {
        let ie = i_eps(eps);
        ie * self.m_a * ie * (eps * eps)
    }

    /// M^ε = ε^α I_ε M_g I_ε + ε² I_ε M_a I_ε.
    pub fn total_mass_eps(&self, eps: f64, alpha: f64, genuine: &GenuineMass) -> Matrix3<f64> {
        let ie = i_eps(eps);
        ie * genuine.matrix() * ie * eps.powf(alpha) + self.added_mass_eps(eps)
    }

    /// Smallest eigenvalue of M♭.
    pub fn m_flat_min_eigen(&self) -> f64 {
        let e = self.m_flat.symmetric_eigenvalues();
        e.x.min(e.y)
    }
}

/// The Kirchhoff potentials, the harmonic field and derived coefficients of
/// one shape, solved at scale 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialSet {
    pub solver: ExteriorSolver,
    pub phi: Vec<NeumannSolution>,
    pub harmonic: HarmonicField,
    pub mass: MassData,
}

/// The four complex moments ∮ w f̂ dz for w ∈ {z, z̄, |z|², z²}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentIntegrals {
    pub z: Complex64,
    pub zbar: Complex64,
    pub abs2: Complex64,
    pub z2: Complex64,
}

pub fn moment_integrals(mesh: &BoundaryMesh, boundary_field: &[V2]) -> MomentIntegrals {
    let trace = ComplexTrace::new(mesh);
    let fhat: Vec<Complex64> = boundary_field.iter().map(|&f| hat(f)).collect();
    MomentIntegrals {
        z: trace.integrate_hat(Weight::Z, &fhat),
        zbar: trace.integrate_hat(Weight::ZBar, &fhat),
        abs2: trace.integrate_hat(Weight::AbsZ2, &fhat),
        z2: trace.integrate_hat(Weight::Z2, &fhat),
    }
}

/// Laurent coefficients c₁..c_{k_max} of a hat-field holomorphic outside the
/// body, f̂(z) = Σ c_k z^{−k}, from M samples on |z| = radius.
pub fn laurent_coefficients(
    mesh: &BoundaryMesh,
    field: impl Fn(V2) -> V2 + Sync,
    k_max: usize,
    radius: f64,
    samples: usize,
) -> Result<Vec<Complex64>, PotentialError> {
    let circumradius = mesh.circumradius();
    if radius <= circumradius {
        return Err(PotentialError::CircleMeetsBody { radius, circumradius });
    }
    let values: Vec<(Complex64, Complex64)> = (0..samples)
        .into_par_iter()
        .map(|m| {
            let phi = 2.0 * PI * m as f64 / samples as f64;
            let z = Complex64::from_polar(radius, phi);
            (z, hat(field(V2::new(z.re, z.im))))
        })
        .collect();
    Ok((1..=k_max)
        .map(|k| values.iter().map(|(z, f)| f * z.powi(k as i32)).sum::<Complex64>() / samples as f64)
        .collect())
}

impl PotentialSet {
    pub fn solve(shape: &ShapeSpec, n: usize) -> Result<Self, PotentialError> {
        let solver = ExteriorSolver::new(shape, n)?;
        let mesh = &solver.mesh;
        let phi = (1..=5)
            .map(|j| solver.solve_neumann(&mesh.kirchhoff_vector(j)))
            .collect::<Result<Vec<_>, _>>()?;
        let moments = geometric_moments(mesh);
        let harmonic = harmonic_field(&solver, moments.xg())?;
        let mut m = [[0.0; 5]; 5];
        for i in 0..5 {
            for j in 0..5 {
                let kj = mesh.kirchhoff_vector(j + 1);
                m[i][j] = mesh.integrate(|q| phi[i].boundary_values[q] * kj[q]);
            }
        }
        for i in 0..5 {
            for j in 0..i {
                let s = 0.5 * (m[i][j] + m[j][i]);
                m[i][j] = s;
                m[j][i] = s;
            }
        }
        let trace = ComplexTrace::new(mesh);
        let hh: Vec<Complex64> = harmonic.boundary_h.iter().map(|&v| hat(v)).collect();
        let xi_c = trace.integrate_hat(Weight::Z, &hh);
        let eta_c = trace.integrate_hat(Weight::Z2, &hh);
        let mm = |i: usize, j: usize| m[i - 1][j - 1];
        let mass = MassData {
            m,
            m_a: Matrix3::from_fn(|i, j| m[i][j]),
            m_flat: Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]),
            xi: V2::new(xi_c.re, xi_c.im),
            eta: V2::new(eta_c.re, eta_c.im),
            mu: Vector3::new(mm(1, 3), mm(2, 3), 0.0),
            mu_hat: Vector3::new(2.0 * mm(2, 5) - mm(3, 2) + mm(1, 4), -2.0 * mm(1, 5) - mm(3, 1) + mm(4, 2), 0.0),
            mu_check: Vector3::new(-2.0 * mm(2, 4) - mm(3, 1) + mm(5, 1), 2.0 * mm(1, 4) + mm(3, 2) + mm(5, 2), 0.0),
            moments,
        };
        Ok(PotentialSet { solver, phi, harmonic, mass })
    }

    pub fn mesh(&self) -> &BoundaryMesh {
        &self.solver.mesh
    }

    /// Φ_i¹(x), i ∈ 1..5.
    pub fn phi1(&self, i: usize, x: V2) -> f64 {
        self.phi[i - 1].value(&self.solver, x)
    }

    /// ∇Φ_i¹(x).
    pub fn grad_phi1(&self, i: usize, x: V2) -> V2 {
        self.phi[i - 1].gradient(&self.solver, x)
    }

    /// Φ_i^ε(x) = ε^{1+δ_{i≥3}} Φ_i¹(x/ε).
    pub fn phi_eps(&self, i: usize, eps: f64, x: V2) -> f64 {
        eps.powi(1 + (i >= 3) as i32) * self.phi1(i, x / eps)
    }

    /// ∇Φ_i^ε(x) = ε^{δ_{i≥3}} ∇Φ_i¹(x/ε).
    pub fn grad_phi_eps(&self, i: usize, eps: f64, x: V2) -> V2 {
        self.grad_phi1(i, x / eps) * eps.powi((i >= 3) as i32)
    }

    pub fn h1(&self, x: V2) -> V2 {
        self.harmonic.velocity(&self.solver, x)
    }

    /// H^ε(x) = ε⁻¹ H¹(x/ε).
    pub fn h_eps(&self, eps: f64, x: V2) -> V2 {
        self.h1(x / eps) / eps
    }

    pub fn psi_h1(&self, x: V2) -> f64 {
        self.harmonic.stream(&self.solver, x)
    }

    /// Ψ_{H^ε}(x) = Ψ_{H¹}(x/ε).
    pub fn psi_h_eps(&self, eps: f64, x: V2) -> f64 {
        self.psi_h1(x / eps)
    }

    /// Boundary traces ∇Φ_i^ε on the nodes of the ε-mesh.
    pub fn boundary_grad_phi_eps(&self, i: usize, eps: f64) -> Vec<V2> {
        let f = eps.powi((i >= 3) as i32);
        self.phi[i - 1].boundary_grad.iter().map(|v| v * f).collect()
    }

    /// Boundary trace of H^ε on the nodes of the ε-mesh.
    pub fn boundary_h_eps(&self, eps: f64) -> Vec<V2> {
        self.harmonic.boundary_h.iter().map(|v| v / eps).collect()
    }

    /// Moments of ∇Φ̂_i¹ along the boundary.
    pub fn phi_moments(&self, i: usize) -> MomentIntegrals {
        moment_integrals(self.mesh(), &self.phi[i - 1].boundary_grad)
    }

    /// The complex-moment lemmas for ∇Φ_i and H, each as a report row.
    pub fn identity_suite(&self, tol: f64) -> IdentityReport {
        let mut rep = IdentityReport::default();
        let md = &self.mass;
        let m = |i: usize, j: usize| md.mij(i, j);
        let s = md.moments.area;
        let (g1, g2) = (md.moments.x_g[0], md.moments.x_g[1]);
        let (m6, m7, m8) = (md.moments.m6, md.moments.m7, md.moments.m8);
        let c = Complex64::new;
        let trace = ComplexTrace::new(self.mesh());
        for i in 1..=5 {
            let gh: Vec<Complex64> = self.phi[i - 1].boundary_grad.iter().map(|&v| hat(v)).collect();
            rep.push_complex(&format!("∮ ∇Φ̂{i} dz"), trace.integrate_hat(Weight::One, &gh), c(0.0, 0.0), tol);
        }
        let z_expected = [
            c(-m(1, 2), m(1, 1) + s),
            c(-(m(2, 2) + s), m(2, 1)),
            c(-(m(3, 2) + s * g1), m(3, 1) - s * g2),
            c(-(m(4, 2) + s * g2), m(4, 1) - s * g1),
            c(-(m(5, 2) + s * g1), m(5, 1) + s * g2),
        ];
        let zbar_expected = [
            c(-m(1, 2), -m(1, 1) + s),
            c(-m(2, 2) + s, -m(2, 1)),
            c(-m(3, 2) + s * g1, -(m(3, 1) + s * g2)),
            c(-m(4, 2) + s * g2, -(m(4, 1) + s * g1)),
            c(-m(5, 2) + s * g1, -m(5, 1) + s * g2),
        ];
        let abs2_expected = [
            c(-2.0 * m(1, 3), 2.0 * s * g1),
            c(-2.0 * m(2, 3), 2.0 * s * g2),
            c(-2.0 * m(3, 3), 0.0),
            c(-2.0 * m(4, 3), -2.0 * m6),
            c(-2.0 * m(5, 3), 2.0 * m7),
        ];
        let z2_expected = [
            c(-2.0 * (m(1, 5) + s * g2), 2.0 * (-m(1, 4) + s * g1)),
            c(-2.0 * (m(2, 5) + s * g1), -2.0 * (m(2, 4) + s * g2)),
            c(-2.0 * (m(3, 5) + m6), -2.0 * (m(3, 4) + m7)),
            c(-2.0 * m(4, 5), -2.0 * (m(4, 4) + m8)),
            c(-2.0 * (m(5, 5) + m8), -2.0 * m(5, 4)),
        ];
        for i in 1..=5 {
            let mi = self.phi_moments(i);
            rep.push_complex(&format!("∮ z ∇Φ̂{i} dz"), mi.z, z_expected[i - 1], tol);
            rep.push_complex(&format!("∮ z̄ ∇Φ̂{i} dz"), mi.zbar, zbar_expected[i - 1], tol);
            rep.push_complex(&format!("∮ |z|² ∇Φ̂{i} dz"), mi.abs2, abs2_expected[i - 1], tol);
            rep.push_complex(&format!("∮ z² ∇Φ̂{i} dz"), mi.z2, z2_expected[i - 1], tol);
        }
        let hm = moment_integrals(self.mesh(), &self.harmonic.boundary_h);
        let hh: Vec<Complex64> = self.harmonic.boundary_h.iter().map(|&v| hat(v)).collect();
        rep.push_complex("∮ Ĥ dz", trace.integrate_hat(Weight::One, &hh), c(1.0, 0.0), tol);
        rep.push_complex("(∮ z̄Ĥ dz)* − ∮ zĤ dz", hm.zbar.conj() - hm.z, c(0.0, 0.0), tol);
        rep.push("Re(i ∮ |z|²Ĥ dz)", (Complex64::i() * hm.abs2).re, 0.0, tol);
        rep
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_set(n: usize) -> PotentialSet {
        PotentialSet::solve(&ShapeSpec::disk(1.0).unwrap(), n).unwrap()
    }

    #[test]
    fn kress_weights_integrate_log_kernel() {
        // ∫₀^{2π} ln(4 sin²(t/2)) dt = 0 and ∫ ln(4 sin²(t/2)) cos t dt = −2π.
        let n = 32;
        let r = kress_weights(n);
        let s0: f64 = r.iter().sum();
        let s1: f64 = (0..n).map(|k| r[k] * (2.0 * PI * k as f64 / n as f64).cos()).sum();
        assert!(s0.abs() < 1e-13, "{s0}");
        assert!((s1 + 2.0 * PI).abs() < 1e-12, "{s1}");
    }

    #[test]
    fn spectral_derivative_of_trig_polynomial() {
        let n = 16;
        let d = spectral_derivative(n);
        let t: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
        let f = DVector::from_iterator(n, t.iter().map(|t| (3.0 * t).sin() + (2.0 * t).cos()));
        let df = &d * f;
        for j in 0..n {
            let exact = 3.0 * (3.0 * t[j]).cos() - 2.0 * (2.0 * t[j]).sin();
            assert!((df[j] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_interpolation_is_exact_for_band_limited_data() {
        let n = 16;
        let v: Vec<f64> = (0..n).map(|j| (2.0 * PI * j as f64 / n as f64 * 3.0).cos() + 0.5).collect();
        let fine = interpolate_periodic(&v, 64);
        for (k, f) in fine.iter().enumerate() {
            let t = 2.0 * PI * k as f64 / 64.0;
            assert!((f - ((3.0 * t).cos() + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn disk_phi1_matches_analytic() {
        let p = disk_set(64);
        for &x in &[V2::new(2.0, 0.0), V2::new(0.3, -1.4), V2::new(1.02, 0.1), V2::new(-5.0, 7.0)] {
            let r2 = x.norm_squared();
            assert!((p.phi1(1, x) + x.x / r2).abs() < 1e-10, "{x:?}");
            let exact = V2::new((x.x * x.x - x.y * x.y) / (r2 * r2), 2.0 * x.x * x.y / (r2 * r2));
            assert!((p.grad_phi1(1, x) - exact).norm() < 1e-9, "{x:?}: {:?}", p.grad_phi1(1, x));
        }
        assert!((p.phi1(1, V2::new(2.0, 0.0)) + 0.5).abs() < 1e-12);
        assert!(p.phi[0].residual < 1e-12);
    }

    #[test]
    fn disk_phi3_vanishes() {
        let p = disk_set(64);
        assert!(p.phi[2].sigma.iter().all(|s| s.abs() < 1e-13));
        assert!(p.grad_phi1(3, V2::new(1.5, 0.5)).norm() < 1e-13);
    }

    #[test]
    fn disk_harmonic_field() {
        let p = disk_set(64);
        for &x in &[V2::new(2.0, 0.0), V2::new(1.05, -0.3), V2::new(-3.0, 4.0)] {
            let exact = perp(x) / (2.0 * PI * x.norm_squared());
            assert!((p.h1(x) - exact).norm() < 1e-10, "{x:?}");
            assert!((p.psi_h1(x) - INV_2PI * x.norm().ln()).abs() < 1e-10);
        }
        assert!((p.h1(V2::new(2.0, 0.0)).norm() - 1.0 / (4.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn disk_mass_data() {
        let p = disk_set(128);
        let m = &p.mass;
        assert!((m.mij(1, 1) - PI).abs() < 1e-10);
        assert!((m.mij(2, 2) - PI).abs() < 1e-10);
        assert!(m.mij(1, 2).abs() < 1e-12);
        for i in 1..=3 {
            assert!(m.mij(i, 3).abs() < 1e-12);
        }
        assert!(m.xi.norm() < 1e-12 && m.eta.norm() < 1e-12);
        let e = m.m_a.symmetric_eigenvalues();
        assert!(e.min().abs() < 1e-10 && e.max() > 3.0);
    }

    #[test]
    fn green_regular_part_on_disk() {
        // g(x, y) = −(1/2π) ln(|x − y*| |y|) with y* = y/|y|².
        let p = disk_set(64);
        let y = V2::new(1.7, -0.4);
        let g = GreenRegular::new(&p.solver, y);
        let ystar = y / y.norm_squared();
        for &x in &[V2::new(2.5, 1.0), V2::new(-1.3, 0.2)] {
            let exact = -INV_2PI * ((x - ystar).norm() * y.norm()).ln();
            assert!((g.value(&p.solver, x) - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn incompatible_data_is_rejected() {
        let p = disk_set(32);
        let g = vec![1.0; 32];
        assert!(matches!(p.solver.solve_neumann(&g), Err(PotentialError::Incompatible(_))));
    }

    #[test]
    fn identity_suite_on_presets() {
        for shape in [
            ShapeSpec::disk(1.0).unwrap(),
            ShapeSpec::ellipse(2.0, 1.0).unwrap(),
            ShapeSpec::perturbed_disk(1.0, &[(2, 0.15, 0.0), (3, 0.0, 0.1)]).unwrap().with_mass_offset([0.1, -0.05]).unwrap(),
        ] {
            let p = PotentialSet::solve(&shape, 256).unwrap();
            let rep = p.identity_suite(1e-8);
            assert!(rep.all_pass(), "{}\n{}", shape.name, rep.table());
        }
    }

    #[test]
    fn laurent_rejects_small_circle() {
        let p = disk_set(32);
        let r = laurent_coefficients(p.mesh(), |x| p.h1(x), 2, 0.5, 64);
        assert!(matches!(r, Err(PotentialError::CircleMeetsBody { .. })));
    }

    #[test]
    fn scaling_laws() {
        let shape = ShapeSpec::ellipse(2.0, 1.0).unwrap();
        let p = PotentialSet::solve(&shape, 128).unwrap();
        let eps = 0.1;
        let direct = PotentialSet::solve(&shape.scale(eps).unwrap(), 128).unwrap();
        let x = V2::new(0.25, 0.2);
        for i in 1..=5 {
            let a = direct.grad_phi1(i, x);
            let b = p.grad_phi_eps(i, eps, x);
            assert!((a - b).norm() < 1e-10 * a.norm().max(1.0), "{i}");
            assert!((direct.phi1(i, x) - p.phi_eps(i, eps, x)).abs() < 1e-10);
        }
        assert!((direct.h1(x) - p.h_eps(eps, x)).norm() < 1e-9);
    }
}
