//! Body shapes, boundary meshes, rigid placements and geometric moments.
//!
//! Boundaries are truncated Fourier series z(t) = Σ c_k e^{ikt}, t ∈ [0, 2π),
//! traversed counterclockwise. The unit normal points out of the fluid, i.e.
//! into the solid: with τ the counterclockwise unit tangent, n = τ^⊥.

use nalgebra::{Matrix2, Matrix3, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub type V2 = Vector2<f64>;

/// x^⊥ = (−x₂, x₁).
#[inline]
pub fn perp(x: V2) -> V2 {
    V2::new(-x.y, x.x)
}

#[inline]
pub fn to_complex(x: V2) -> Complex64 {
    Complex64::new(x.x, x.y)
}

#[inline]
pub fn from_complex(z: Complex64) -> V2 {
    V2::new(z.re, z.im)
}

/// The rotation generator J₂ = [[0, −1], [1, 0]].
pub fn j2() -> Matrix2<f64> {
    Matrix2::new(0.0, -1.0, 1.0, 0.0)
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeometryError {
    #[error("panel count must be even and at least 4, got {0}")]
    BadPanelCount(usize),
    #[error("boundary curve self-intersects (panels {0} and {1})")]
    SelfIntersecting(usize, usize),
    #[error("boundary curve is not counterclockwise (signed area {0})")]
    NotCounterclockwise(f64),
    #[error("invalid shape parameter: {0}")]
    BadParameter(String),
    #[error("scale factor must be positive, got {0}")]
    BadScale(f64),
}

/// A closed body boundary as a truncated Fourier series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub name: String,
    /// (k, c_k) pairs of z(t) = Σ c_k e^{ikt}.
    pub modes: Vec<(i32, Complex64)>,
    /// Mass centre relative to the geometric centre. The stored curve is
    /// translated so that the mass centre sits at the origin.
    pub mass_offset: [f64; 2],
}

impl ShapeSpec {
    /// Builds a shape from raw modes and recentres it so that the mass centre
    /// (geometric centre + `mass_offset`) is the origin.
    pub fn from_modes(
        name: &str,
        modes: Vec<(i32, Complex64)>,
        mass_offset: [f64; 2],
    ) -> Result<Self, GeometryError> {
        if modes.iter().all(|(k, c)| *k == 0 || c.norm() == 0.0) {
            return Err(GeometryError::BadParameter("no non-constant mode".into()));
        }
        let mut shape = ShapeSpec { name: name.to_string(), modes, mass_offset };
        let (area, centroid) = shape.exact_area_centroid();
        if area <= 0.0 {
            return Err(GeometryError::NotCounterclockwise(area));
        }
        let shift = -(centroid + V2::new(mass_offset[0], mass_offset[1]));
        shape.translate(shift);
        Ok(shape)
    }

    pub fn disk(radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) {
            return Err(GeometryError::BadParameter(format!("disk radius {radius}")));
        }
        Self::from_modes("disk", vec![(1, Complex64::new(radius, 0.0))], [0.0, 0.0])
    }

    /// Ellipse with semi-axis `a` along x₁ and `b` along x₂.
    pub fn ellipse(a: f64, b: f64) -> Result<Self, GeometryError> {
        if !(a > 0.0 && b > 0.0) {
            return Err(GeometryError::BadParameter(format!("ellipse axes {a}, {b}")));
        }
        let mut modes = vec![(1, Complex64::new(0.5 * (a + b), 0.0))];
        if a != b {
            modes.push((-1, Complex64::new(0.5 * (a - b), 0.0)));
        }
        Self::from_modes("ellipse", modes, [0.0, 0.0])
    }

    /// Radial perturbation r(θ) = R(1 + Σ a_k cos kθ + b_k sin kθ), given as
    /// (k, a_k, b_k) triples with k ≥ 1.
    pub fn perturbed_disk(radius: f64, perturbation: &[(i32, f64, f64)]) -> Result<Self, GeometryError> {
        if !(radius > 0.0) {
            return Err(GeometryError::BadParameter(format!("radius {radius}")));
        }
        let mut acc: std::collections::BTreeMap<i32, Complex64> = Default::default();
        *acc.entry(1).or_default() += radius;
        for &(k, a, b) in perturbation {
            if k < 1 {
                return Err(GeometryError::BadParameter(format!("mode index {k}")));
            }
            // R a cos kθ e^{iθ} = R a/2 (e^{i(k+1)θ} + e^{-i(k-1)θ}),
            // R b sin kθ e^{iθ} = R b/(2i) (e^{i(k+1)θ} − e^{-i(k-1)θ}).
            let plus = Complex64::new(0.5 * radius * a, -0.5 * radius * b);
            let minus = Complex64::new(0.5 * radius * a, 0.5 * radius * b);
            *acc.entry(k + 1).or_default() += plus;
            *acc.entry(1 - k).or_default() += minus;
        }
        let modes = acc.into_iter().filter(|(_, c)| c.norm() > 0.0).collect();
        Self::from_modes("perturbed-disk", modes, [0.0, 0.0])
    }

    /// Same curve, mass centre moved to `offset` relative to the geometric centre.
    pub fn with_mass_offset(&self, offset: [f64; 2]) -> Result<Self, GeometryError> {
        Self::from_modes(&self.name, self.modes.clone(), offset)
    }

    /// S₀ ↦ εS₀.
    pub fn scale(&self, eps: f64) -> Result<Self, GeometryError> {
        if !(eps > 0.0) {
            return Err(GeometryError::BadScale(eps));
        }
        Ok(ShapeSpec {
            name: self.name.clone(),
            modes: self.modes.iter().map(|&(k, c)| (k, c * eps)).collect(),
            mass_offset: [self.mass_offset[0] * eps, self.mass_offset[1] * eps],
        })
    }

    fn translate(&mut self, shift: V2) {
        let s = to_complex(shift);
        match self.modes.iter_mut().find(|(k, _)| *k == 0) {
            Some((_, c)) => *c += s,
            None => self.modes.push((0, s)),
        }
        self.modes.sort_by_key(|(k, _)| *k);
    }

    pub fn max_mode(&self) -> i32 {
        self.modes.iter().map(|(k, _)| k.abs()).max().unwrap_or(0)
    }

    /// z(t), z'(t), z''(t).
    pub fn eval(&self, t: f64) -> (Complex64, Complex64, Complex64) {
        let mut z = Complex64::new(0.0, 0.0);
        let mut dz = z;
        let mut ddz = z;
        for &(k, c) in &self.modes {
            let kf = k as f64;
            let e = Complex64::new((kf * t).cos(), (kf * t).sin());
            let term = c * e;
            z += term;
            dz += term * Complex64::new(0.0, kf);
            ddz -= term * (kf * kf);
        }
        (z, dz, ddz)
    }

    /// Area and centroid, exact for the trigonometric polynomial.
    fn exact_area_centroid(&self) -> (f64, V2) {
        let m = (8 * (self.max_mode() as usize + 1)).max(256);
        let (mut area, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for j in 0..m {
            let t = 2.0 * PI * j as f64 / m as f64;
            let (z, dz, _) = self.eval(t);
            area += 0.5 * (z.re * dz.im - z.im * dz.re);
            sx += 0.5 * z.re * z.re * dz.im;
            sy -= 0.5 * z.im * z.im * dz.re;
        }
        let h = 2.0 * PI / m as f64;
        (area * h, V2::new(sx, sy) * h / (area * h))
    }

    /// Enclosed area from the Fourier coefficients: π Σ k |c_k|².
    pub fn fourier_area(&self) -> f64 {
        PI * self.modes.iter().map(|&(k, c)| k as f64 * c.norm_sqr()).sum::<f64>()
    }
}

/// Equi-parameter panel discretization of a boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryMesh {
    pub n: usize,
    pub points: Vec<V2>,
    pub tangents: Vec<V2>,
    pub normals: Vec<V2>,
    /// Arclength trapezoid weights (2π/N)|z'(t_j)|.
    pub weights: Vec<f64>,
    /// |z'(t_j)|.
    pub speed: Vec<f64>,
    /// z''(t_j).
    pub accel: Vec<V2>,
}

pub fn build_mesh(shape: &ShapeSpec, n: usize) -> Result<BoundaryMesh, GeometryError> {
    if n < 4 || n % 2 == 1 {
        return Err(GeometryError::BadPanelCount(n));
    }
    let h = 2.0 * PI / n as f64;
    let mut mesh = BoundaryMesh {
        n,
        points: Vec::with_capacity(n),
        tangents: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        speed: Vec::with_capacity(n),
        accel: Vec::with_capacity(n),
    };
    for j in 0..n {
        let (z, dz, ddz) = shape.eval(h * j as f64);
        let s = dz.norm();
        let tau = V2::new(dz.re / s, dz.im / s);
        mesh.points.push(from_complex(z));
        mesh.tangents.push(tau);
        mesh.normals.push(perp(tau));
        mesh.weights.push(h * s);
        mesh.speed.push(s);
        mesh.accel.push(from_complex(ddz));
    }
    let signed = mesh.signed_area();
    if signed <= 0.0 {
        return Err(GeometryError::NotCounterclockwise(signed));
    }
    mesh.check_simple()?;
    Ok(mesh)
}

fn segments_cross(p1: V2, p2: V2, q1: V2, q2: V2) -> bool {
    let cross = |a: V2, b: V2| a.x * b.y - a.y * b.x;
    let d1 = cross(p2 - p1, q1 - p1);
    let d2 = cross(p2 - p1, q2 - p1);
    let d3 = cross(q2 - q1, p1 - q1);
    let d4 = cross(q2 - q1, p2 - q1);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

impl BoundaryMesh {
    fn check_simple(&self) -> Result<(), GeometryError> {
        let n = self.n;
        for i in 0..n {
            let (p1, p2) = (self.points[i], self.points[(i + 1) % n]);
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                if segments_cross(p1, p2, self.points[j], self.points[(j + 1) % n]) {
                    return Err(GeometryError::SelfIntersecting(i, j));
                }
            }
        }
        Ok(())
    }

    fn signed_area(&self) -> f64 {
        -0.5 * (0..self.n).map(|j| self.points[j].dot(&self.normals[j]) * self.weights[j]).sum::<f64>()
    }

    pub fn perimeter(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// ∮ f ds by the trapezoid rule.
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.n).map(|j| f(j) * self.weights[j]).sum()
    }

    pub fn circumradius(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn max_panel(&self) -> f64 {
        self.weights.iter().cloned().fold(0.0, f64::max)
    }

    pub fn distance_to(&self, x: V2) -> f64 {
        self.points.iter().map(|p| (p - x).norm()).fold(f64::INFINITY, f64::min)
    }

    /// Point-in-polygon test on the node polygon (winding number).
    pub fn contains(&self, x: V2) -> bool {
        let mut winding = 0i32;
        for i in 0..self.n {
            let a = self.points[i];
            let b = self.points[(i + 1) % self.n];
            let side = (b.x - a.x) * (x.y - a.y) - (x.x - a.x) * (b.y - a.y);
            if a.y <= x.y {
                if b.y > x.y && side > 0.0 {
                    winding += 1;
                }
            } else if b.y <= x.y && side < 0.0 {
                winding -= 1;
            }
        }
        winding != 0
    }

    /// The mesh of εS₀ (same parameter nodes).
    pub fn scaled(&self, eps: f64) -> BoundaryMesh {
        BoundaryMesh {
            n: self.n,
            points: self.points.iter().map(|p| p * eps).collect(),
            tangents: self.tangents.clone(),
            normals: self.normals.clone(),
            weights: self.weights.iter().map(|w| w * eps).collect(),
            speed: self.speed.iter().map(|s| s * eps).collect(),
            accel: self.accel.iter().map(|a| a * eps).collect(),
        }
    }

    /// Boundary data K_j (j = 1..5) at node `node`.
    pub fn kirchhoff_data(&self, j: usize, node: usize) -> f64 {
        let x = self.points[node];
        let n = self.normals[node];
        match j {
            1 => n.x,
            2 => n.y,
            3 => perp(x).dot(&n),
            4 => -x.x * n.x + x.y * n.y,
            5 => x.y * n.x + x.x * n.y,
            _ => panic!("Kirchhoff index {j} out of range 1..=5"),
        }
    }

    pub fn kirchhoff_vector(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.kirchhoff_data(j, i)).collect()
    }
}

/// Area, geometric centre and the quartic moments m₆, m₇, m₈.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub area: f64,
    pub x_g: [f64; 2],
    /// ∫_S (x₁² − x₂²).
    pub m6: f64,
    /// 2∫_S x₁x₂.
    pub m7: f64,
    /// ∫_S |x|².
    pub m8: f64,
}

impl MomentSet {
    pub fn xg(&self) -> V2 {
        V2::new(self.x_g[0], self.x_g[1])
    }

    pub fn scaled(&self, eps: f64) -> MomentSet {
        let e4 = eps.powi(4);
        MomentSet {
            area: self.area * eps * eps,
            x_g: [self.x_g[0] * eps, self.x_g[1] * eps],
            m6: self.m6 * e4,
            m7: self.m7 * e4,
            m8: self.m8 * e4,
        }
    }
}

/// Interior integrals via ∫_S div F = −∮ F·n ds (n points into S).
pub fn geometric_moments(mesh: &BoundaryMesh) -> MomentSet {
    let flux = |f: &dyn Fn(V2) -> V2| -> f64 {
        -mesh.integrate(|j| f(mesh.points[j]).dot(&mesh.normals[j]))
    };
    let area = flux(&|x| x * 0.5);
    let sx = flux(&|x| x * (x.x / 3.0));
    let sy = flux(&|x| x * (x.y / 3.0));
    let m6 = flux(&|x| V2::new(x.x.powi(3) / 3.0, -x.y.powi(3) / 3.0));
    let m7 = flux(&|x| V2::new(x.x * x.x * x.y, 0.0));
    let m8 = flux(&|x| x * (x.norm_squared() / 4.0));
    MomentSet { area, x_g: [sx / area, sy / area], m6, m7, m8 }
}

/// Rigid placement x_lab = R_θ x_body + h.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Placement {
    pub h: [f64; 2],
    pub theta: f64,
}

impl Placement {
    pub fn new(h: V2, theta: f64) -> Self {
        Placement { h: [h.x, h.y], theta }
    }

    pub fn hv(&self) -> V2 {
        V2::new(self.h[0], self.h[1])
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        rotation(self.theta)
    }

    /// Q_θ = diag(R_θ, 1).
    pub fn q(&self) -> Matrix3<f64> {
        let r = self.rotation();
        Matrix3::new(r[(0, 0)], r[(0, 1)], 0.0, r[(1, 0)], r[(1, 1)], 0.0, 0.0, 0.0, 1.0)
    }

    pub fn to_lab(&self, x: V2) -> V2 {
        self.rotation() * x + self.hv()
    }

    pub fn to_body(&self, x: V2) -> V2 {
        self.rotation().transpose() * (x - self.hv())
    }

    /// h′ = R_θ ℓ.
    pub fn lab_velocity(&self, ell: V2) -> V2 {
        self.rotation() * ell
    }

    /// ℓ = R_θᵀ h′.
    pub fn body_velocity(&self, h_dot: V2) -> V2 {
        self.rotation().transpose() * h_dot
    }

    /// (R_θ)′ = r J₂ R_θ.
    pub fn rotation_rate(&self, r: f64) -> Matrix2<f64> {
        j2() * self.rotation() * r
    }
}

pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}
