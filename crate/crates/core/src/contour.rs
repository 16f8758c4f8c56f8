//! Complex contour quadrature on boundary meshes and the boundary-integral
//! identity suite.
//!
//! Vectors are identified with complex numbers z = x₁ + i x₂ and fields with
//! their hat map f̂ = f₁ − i f₂, so that ∮ f̂ dz = ∮ f·τ ds − i ∮ f·n ds.

use crate::geometry::{to_complex, BoundaryMesh, MomentSet, V2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ContourError {
    #[error("unknown contour weight `{0}`")]
    UnknownWeight(String),
    #[error("field is not tangent at node {node}: |f·n| = {normal:e}")]
    NotTangent { node: usize, normal: f64 },
}

#[inline]
pub fn hat(f: V2) -> Complex64 {
    Complex64::new(f.x, -f.y)
}

#[inline]
pub fn unhat(c: Complex64) -> V2 {
    V2::new(c.re, -c.im)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weight {
    One,
    Z,
    ZBar,
    AbsZ2,
    Z2,
    ZAbsZ2,
    ZBar2,
}

impl Weight {
    pub fn apply(self, z: Complex64) -> Complex64 {
        match self {
            Weight::One => Complex64::new(1.0, 0.0),
            Weight::Z => z,
            Weight::ZBar => z.conj(),
            Weight::AbsZ2 => Complex64::new(z.norm_sqr(), 0.0),
            Weight::Z2 => z * z,
            Weight::ZAbsZ2 => z * z.norm_sqr(),
            Weight::ZBar2 => z.conj() * z.conj(),
        }
    }
}

impl FromStr for Weight {
    type Err = ContourError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "1" | "one" => Weight::One,
            "z" => Weight::Z,
            "zbar" => Weight::ZBar,
            "|z|^2" | "absz2" => Weight::AbsZ2,
            "z^2" | "z2" => Weight::Z2,
            "z|z|^2" | "zabsz2" => Weight::ZAbsZ2,
            "zbar^2" | "zbar2" => Weight::ZBar2,
            other => return Err(ContourError::UnknownWeight(other.to_string())),
        })
    }
}

/// Node values z_j and panel differentials dz_j = (τ₁ + iτ₂) w_j.
#[derive(Debug, Clone)]
pub struct ComplexTrace {
    pub z: Vec<Complex64>,
    pub dz: Vec<Complex64>,
}

impl ComplexTrace {
    pub fn new(mesh: &BoundaryMesh) -> Self {
        ComplexTrace {
            z: mesh.points.iter().map(|&p| to_complex(p)).collect(),
            dz: (0..mesh.n).map(|j| to_complex(mesh.tangents[j]) * mesh.weights[j]).collect(),
        }
    }

    /// ∮ weight(z) f̂ dz for hat-samples f̂ at the nodes.
    pub fn integrate_hat(&self, weight: Weight, fhat: &[Complex64]) -> Complex64 {
        self.z.iter().zip(&self.dz).zip(fhat).map(|((&z, &dz), &f)| weight.apply(z) * f * dz).sum()
    }

    /// ∮ weight(z) dz.
    pub fn integrate_weight(&self, weight: Weight) -> Complex64 {
        self.z.iter().zip(&self.dz).map(|(&z, &dz)| weight.apply(z) * dz).sum()
    }
}

/// ∮ weight·f̂ dz for a vector field sampled at the mesh nodes.
pub fn contour_integral(mesh: &BoundaryMesh, weight: Weight, field: &[V2]) -> Complex64 {
    let fhat: Vec<Complex64> = field.iter().map(|&f| hat(f)).collect();
    ComplexTrace::new(mesh).integrate_hat(weight, &fhat)
}

/// (∮(f·g) n ds, ∮(f·g)(x^⊥·n) ds) evaluated on the complex side as
/// (i(∮ f̂ĝ dz)*, Re ∮ z f̂ĝ dz). Both fields must be tangent to the curve.
pub fn blasius_pair(mesh: &BoundaryMesh, f: &[V2], g: &[V2], tol: f64) -> Result<(V2, f64), ContourError> {
    for (node, (fv, gv)) in f.iter().zip(g).enumerate() {
        let n = mesh.normals[node];
        for v in [fv, gv] {
            let normal = v.dot(&n).abs();
            if normal > tol * v.norm().max(1.0) {
                return Err(ContourError::NotTangent { node, normal });
            }
        }
    }
    let trace = ComplexTrace::new(mesh);
    let prod: Vec<Complex64> = f.iter().zip(g).map(|(&a, &b)| hat(a) * hat(b)).collect();
    let force = Complex64::new(0.0, 1.0) * trace.integrate_hat(Weight::One, &prod).conj();
    let torque = trace.integrate_hat(Weight::Z, &prod).re;
    Ok((V2::new(force.re, force.im), torque))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityRow {
    pub name: String,
    pub computed: f64,
    pub expected: f64,
    pub abs_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IdentityReport {
    pub rows: Vec<IdentityRow>,
}

impl IdentityReport {
    pub fn push(&mut self, name: impl Into<String>, computed: f64, expected: f64, tolerance: f64) {
        let abs_error = (computed - expected).abs();
        self.rows.push(IdentityRow {
            name: name.into(),
            computed,
            expected,
            abs_error,
            tolerance,
            pass: abs_error <= tolerance,
        });
    }

    pub fn push_complex(&mut self, name: &str, computed: Complex64, expected: Complex64, tolerance: f64) {
        self.push(format!("{name} [re]"), computed.re, expected.re, tolerance);
        self.push(format!("{name} [im]"), computed.im, expected.im, tolerance);
    }

    pub fn extend(&mut self, other: IdentityReport) {
        self.rows.extend(other.rows);
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn max_error(&self) -> f64 {
        self.rows.iter().map(|r| r.abs_error).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&IdentityRow> {
        self.rows.iter().filter(|r| !r.pass).collect()
    }

    /// Fixed-column text table.
    pub fn table(&self) -> String {
        let mut out = format!("{:<48} {:>22} {:>22} {:>10} {:>9} {}\n", "identity", "computed", "expected", "abs err", "tol", "ok");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<48} {:>22.15e} {:>22.15e} {:>10.2e} {:>9.1e} {}\n",
                r.name,
                r.computed,
                r.expected,
                r.abs_error,
                r.tolerance,
                if r.pass { "pass" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Polynomial-times-K_j boundary integrals and the four complex contour
/// integrals of z̄², z̄, |z|², z|z|². `moments` must describe the same body.
pub fn identity_suite(mesh: &BoundaryMesh, moments: &MomentSet, tol: f64) -> IdentityReport {
    let mut rep = IdentityReport::default();
    let s = moments.area;
    let (g1, g2) = (moments.x_g[0], moments.x_g[1]);
    let (m6, m7, m8) = (moments.m6, moments.m7, moments.m8);
    let k = |j: usize| mesh.kirchhoff_vector(j);
    let kk: Vec<Vec<f64>> = (1..=5).map(k).collect();
    let integral = |poly: &dyn Fn(V2) -> f64, j: usize| -> f64 { mesh.integrate(|i| poly(mesh.points[i]) * kk[j - 1][i]) };
    let one = |_: V2| 1.0;
    let x1 = |x: V2| x.x;
    let x2 = |x: V2| x.y;
    let r2 = |x: V2| x.norm_squared();
    let x1x2 = |x: V2| x.x * x.y;
    let d2 = |x: V2| x.x * x.x - x.y * x.y;

    for j in 1..=5 {
        rep.push(format!("d0: ∮ K{j} ds"), integral(&one, j), 0.0, tol);
    }
    rep.push("d1: ∮ x1 K1", integral(&x1, 1), -s, tol);
    rep.push("d1: ∮ x2 K1", integral(&x2, 1), 0.0, tol);
    rep.push("d1: ∮ x1 K2", integral(&x1, 2), 0.0, tol);
    rep.push("d1: ∮ x2 K2", integral(&x2, 2), -s, tol);
    rep.push("d1: ∮ x1 K3", integral(&x1, 3), s * g2, tol);
    rep.push("d1: ∮ x2 K3", integral(&x2, 3), -s * g1, tol);
    rep.push("d1: ∮ x1 K4", integral(&x1, 4), s * g1, tol);
    rep.push("d1: ∮ x2 K4", integral(&x2, 4), -s * g2, tol);
    rep.push("d1: ∮ x1 K5", integral(&x1, 5), -s * g2, tol);
    rep.push("d1: ∮ x2 K5", integral(&x2, 5), -s * g1, tol);

    rep.push("d2: ∮ |x|² K1", integral(&r2, 1), -2.0 * g1 * s, tol);
    rep.push("d2: ∮ |x|² K2", integral(&r2, 2), -2.0 * g2 * s, tol);
    rep.push("d2: ∮ |x|² K3", integral(&r2, 3), 0.0, tol);
    rep.push("d2: ∮ x1x2 K1", integral(&x1x2, 1), -s * g2, tol);
    rep.push("d2: ∮ x1x2 K2", integral(&x1x2, 2), -s * g1, tol);
    rep.push("d2: ∮ x1x2 K3", integral(&x1x2, 3), -m6, tol);
    rep.push("d2: ∮ (x1²−x2²) K1", integral(&d2, 1), -2.0 * s * g1, tol);
    rep.push("d2: ∮ (x1²−x2²) K2", integral(&d2, 2), 2.0 * s * g2, tol);
    rep.push("d2: ∮ (x1²−x2²) K3", integral(&d2, 3), 2.0 * m7, tol);
    rep.push("d2: ∮ |x|² K4", integral(&r2, 4), 2.0 * m6, tol);
    rep.push("d2: ∮ |x|² K5", integral(&r2, 5), -2.0 * m7, tol);
    rep.push("d2: ∮ x1x2 K4", integral(&x1x2, 4), 0.0, tol);
    rep.push("d2: ∮ x1x2 K5", integral(&x1x2, 5), -m8, tol);
    rep.push("d2: ∮ (x1²−x2²) K4", integral(&d2, 4), 2.0 * m8, tol);
    rep.push("d2: ∮ (x1²−x2²) K5", integral(&d2, 5), 0.0, tol);

    let trace = ComplexTrace::new(mesh);
    let c = Complex64::new;
    rep.push_complex("∮ z̄² dz", trace.integrate_weight(Weight::ZBar2), c(4.0 * s * g2, 4.0 * s * g1), tol);
    rep.push_complex("∮ z̄ dz", trace.integrate_weight(Weight::ZBar), c(0.0, 2.0 * s), tol);
    rep.push_complex("∮ |z|² dz", trace.integrate_weight(Weight::AbsZ2), c(-2.0 * s * g2, 2.0 * s * g1), tol);
    rep.push_complex("∮ z|z|² dz", trace.integrate_weight(Weight::ZAbsZ2), c(-2.0 * m7, 2.0 * m6), tol);
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, geometric_moments, perp, ShapeSpec};
    use std::f64::consts::PI;

    #[test]
    fn zbar_on_unit_disk() {
        let mesh = build_mesh(&ShapeSpec::disk(1.0).unwrap(), 64).unwrap();
        let t = ComplexTrace::new(&mesh);
        let v = t.integrate_weight(Weight::ZBar);
        assert!((v - Complex64::new(0.0, 2.0 * PI)).norm() < 1e-13);
        assert!(t.integrate_weight(Weight::Z).norm() < 1e-13);
        assert!(t.dz.iter().sum::<Complex64>().norm() < 1e-12);
    }

    #[test]
    fn weight_tags() {
        assert_eq!("zbar".parse::<Weight>().unwrap(), Weight::ZBar);
        assert_eq!("z|z|^2".parse::<Weight>().unwrap(), Weight::ZAbsZ2);
        assert_eq!("w".parse::<Weight>(), Err(ContourError::UnknownWeight("w".into())));
    }

    #[test]
    fn hat_is_an_involution_up_to_conjugation() {
        let f = V2::new(0.3, -1.7);
        assert_eq!(unhat(hat(f)), f);
        assert_eq!(hat(f).conj(), Complex64::new(f.x, f.y));
    }

    #[test]
    fn weight_one_gives_circulation_minus_i_flux() {
        let mesh = build_mesh(&ShapeSpec::ellipse(2.0, 1.0).unwrap(), 128).unwrap();
        let field: Vec<V2> = mesh.points.iter().map(|p| V2::new(1.0 + p.y * p.y, p.x - 0.5)).collect();
        let circ = mesh.integrate(|j| field[j].dot(&mesh.tangents[j]));
        let flux = mesh.integrate(|j| field[j].dot(&mesh.normals[j]));
        let v = contour_integral(&mesh, Weight::One, &field);
        assert!((v - Complex64::new(circ, -flux)).norm() < 1e-12);
    }

    #[test]
    fn zabsz2_matches_moments_on_ellipse() {
        let mesh = build_mesh(&ShapeSpec::ellipse(2.0, 1.0).unwrap(), 256).unwrap();
        let m = geometric_moments(&mesh);
        let v = ComplexTrace::new(&mesh).integrate_weight(Weight::ZAbsZ2);
        assert!((v - Complex64::new(-2.0 * m.m7, 2.0 * m.m6)).norm() < 1e-11);
        let zb2 = ComplexTrace::new(&mesh).integrate_weight(Weight::ZBar2);
        assert!(zb2.norm() < 1e-12);
    }

    #[test]
    fn blasius_matches_real_quadrature() {
        let mesh = build_mesh(&ShapeSpec::perturbed_disk(1.0, &[(3, 0.2, 0.0)]).unwrap(), 256).unwrap();
        let amp_f: Vec<f64> = (0..mesh.n).map(|j| 1.0 + (j as f64 * 0.1).sin()).collect();
        let amp_g: Vec<f64> = mesh.points.iter().map(|p| p.x - 2.0 * p.y * p.y).collect();
        let f: Vec<V2> = (0..mesh.n).map(|j| mesh.tangents[j] * amp_f[j]).collect();
        let g: Vec<V2> = (0..mesh.n).map(|j| mesh.tangents[j] * amp_g[j]).collect();
        let (force, torque) = blasius_pair(&mesh, &f, &g, 1e-12).unwrap();
        let fx = mesh.integrate(|j| f[j].dot(&g[j]) * mesh.normals[j].x);
        let fy = mesh.integrate(|j| f[j].dot(&g[j]) * mesh.normals[j].y);
        let tq = mesh.integrate(|j| f[j].dot(&g[j]) * perp(mesh.points[j]).dot(&mesh.normals[j]));
        assert!((force - V2::new(fx, fy)).norm() < 1e-10);
        assert!((torque - tq).abs() < 1e-10);
        let bad: Vec<V2> = mesh.normals.clone();
        assert!(matches!(blasius_pair(&mesh, &bad, &g, 1e-12), Err(ContourError::NotTangent { .. })));
    }

    #[test]
    fn suite_passes_on_presets() {
        for shape in [
            ShapeSpec::disk(1.0).unwrap(),
            ShapeSpec::ellipse(2.0, 1.0).unwrap(),
            ShapeSpec::perturbed_disk(1.0, &[(3, 0.2, 0.0)]).unwrap().with_mass_offset([0.1, -0.2]).unwrap(),
        ] {
            let mesh = build_mesh(&shape, 512).unwrap();
            let rep = identity_suite(&mesh, &geometric_moments(&mesh), 1e-8);
            assert!(rep.all_pass(), "{}", rep.table());
            assert_eq!(rep.rows.len(), 5 + 10 + 15 + 8);
        }
    }
}
