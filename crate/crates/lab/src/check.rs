//! Aggregated identity and invariant checks for the configured body and the
//! reference shapes.

use crate::config::ExperimentConfig;
use crate::experiment::LabError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallbody_core::contour::{identity_suite, IdentityReport};
use smallbody_core::geometry::{build_mesh, geometric_moments, ShapeSpec, V2};
use smallbody_core::normal_form::{Lambda, StructureTensors};
use smallbody_core::potential::{laurent_coefficients, GenuineMass, PotentialSet};
use std::f64::consts::PI;

/// Panels used for the identity checks.
pub const CHECK_PANELS: usize = 512;
/// Tolerance of rows involving only the boundary geometry.
pub const GEOMETRY_TOL: f64 = 1e-8;
/// Tolerance of rows involving solved potentials.
pub const POTENTIAL_TOL: f64 = 1e-6;
pub const ORTHOGONALITY_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckSection {
    pub name: String,
    pub panels: usize,
    pub report: IdentityReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub sections: Vec<CheckSection>,
    pub all_pass: bool,
}

impl CheckReport {
    pub fn rows(&self) -> usize {
        self.sections.iter().map(|s| s.report.rows.len()).sum()
    }
}

pub fn reference_shapes() -> Vec<(String, ShapeSpec)> {
    vec![
        ("disk(1)".into(), ShapeSpec::disk(1.0).expect("disk")),
        ("ellipse(2,1)".into(), ShapeSpec::ellipse(2.0, 1.0).expect("ellipse")),
        (
            "perturbed-disk(1; k=2 a=0.15, k=3 b=0.1; offset 0.1,-0.05)".into(),
            ShapeSpec::perturbed_disk(1.0, &[(2, 0.15, 0.0), (3, 0.0, 0.1)])
                .and_then(|s| s.with_mass_offset([0.1, -0.05]))
                .expect("perturbed disk"),
        ),
    ]
}

/// Boundary-geometry identities, complex-moment lemmas of the potentials and
/// sign checks of the added-mass matrices.
pub fn shape_section(name: &str, shape: &ShapeSpec, panels: usize) -> Result<(CheckSection, PotentialSet), LabError> {
    let mesh = build_mesh(shape, panels).map_err(|e| LabError::Config(crate::config::ConfigError::Invalid(e.to_string())))?;
    let mut report = identity_suite(&mesh, &geometric_moments(&mesh), GEOMETRY_TOL);
    let pot = PotentialSet::solve(shape, panels)?;
    report.extend(pot.identity_suite(POTENTIAL_TOL));
    let ma = pot.mass.m_a.symmetric_eigenvalues();
    report.push("min eigenvalue of M_a (≥ 0)", ma.min().min(0.0), 0.0, 1e-10);
    report.push("min eigenvalue of M♭ (> 0)", f64::from(pot.mass.m_flat_min_eigen() > 0.0), 1.0, 0.0);
    let c1 = laurent_coefficients(pot.mesh(), |x| pot.h1(x), 1, 2.0 * mesh.circumradius(), 256)?[0];
    report.push_complex("leading Laurent coefficient of Ĥ", c1, num_complex::Complex64::new(0.0, -1.0 / (2.0 * PI)), GEOMETRY_TOL);
    Ok((CheckSection { name: name.to_string(), panels, report }, pot))
}

/// Closed-form disk values.
pub fn disk_golden(panels: usize) -> Result<CheckSection, LabError> {
    let pot = PotentialSet::solve(&ShapeSpec::disk(1.0).expect("disk"), panels)?;
    let mut report = IdentityReport::default();
    for x in [V2::new(2.0, 0.0), V2::new(0.3, -1.4), V2::new(-5.0, 7.0), V2::new(1.1, 0.2)] {
        report.push(format!("disk Φ₁({:.1}, {:.1}) = −x₁/|x|²", x.x, x.y), pot.phi1(1, x), -x.x / x.norm_squared(), 1e-8);
    }
    report.push("disk m₁₁ = π", pot.mass.mij(1, 1), PI, 1e-6);
    report.push("disk m₂₂ = π", pot.mass.mij(2, 2), PI, 1e-6);
    report.push("disk |ξ| = 0", pot.mass.xi.norm(), 0.0, 1e-9);
    report.push("disk |η| = 0", pot.mass.eta.norm(), 0.0, 1e-9);
    let phi3 = pot.phi[2].boundary_values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    report.push("disk max |Φ₃| on the boundary", phi3, 0.0, 1e-12);
    report.push("disk |∇Φ₃(1.5, 0.5)|", pot.grad_phi1(3, V2::new(1.5, 0.5)).norm(), 0.0, 1e-12);
    Ok(CheckSection { name: "disk closed forms".into(), panels, report })
}

/// max over random p of |⟨Λ, p, p⟩·p| / |p|³ for Λ_g and Λ_a.
pub fn orthogonality_section(pot: &PotentialSet, genuine: &GenuineMass, seed: u64, samples: usize) -> CheckSection {
    let t = StructureTensors::new(&pot.mass, genuine);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = IdentityReport::default();
    for (name, which) in [("Λ_g", Lambda::G), ("Λ_a", Lambda::A), ("Λ̲", Lambda::Under)] {
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let p = smallbody_core::normal_form::V3::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
            worst = worst.max(t.quadratic(which, p).dot(&p).abs() / p.norm().powi(3));
        }
        report.push(format!("max |⟨{name},p,p⟩·p|/|p|³ over {samples} samples"), worst, 0.0, 1e-13);
    }
    CheckSection { name: "tensor orthogonality".into(), panels: pot.mesh().n, report }
}

pub fn check(cfg: &ExperimentConfig) -> Result<CheckReport, LabError> {
    let mut sections = Vec::new();
    let (own, pot) = shape_section(&format!("configured {}", cfg.shape_spec()?.name), &cfg.shape_spec()?, CHECK_PANELS)?;
    sections.push(own);
    sections.push(orthogonality_section(&pot, &cfg.genuine(), cfg.run.seed, ORTHOGONALITY_SAMPLES));
    for (name, shape) in reference_shapes() {
        sections.push(shape_section(&name, &shape, CHECK_PANELS)?.0);
    }
    sections.push(disk_golden(CHECK_PANELS)?);
    let all_pass = sections.iter().all(|s| s.report.all_pass());
    Ok(CheckReport { sections, all_pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_golden_values_pass_at_moderate_resolution() {
        let s = disk_golden(128).unwrap();
        assert!(s.report.all_pass(), "{}", s.report.table());
    }

    #[test]
    fn orthogonality_is_exact_for_a_generic_body() {
        let shape = ShapeSpec::perturbed_disk(1.0, &[(2, 0.1, 0.05)]).unwrap().with_mass_offset([0.05, 0.0]).unwrap();
        let pot = PotentialSet::solve(&shape, 64).unwrap();
        let s = orthogonality_section(&pot, &GenuineMass { m1: 2.0, j1: 0.7 }, 7, 500);
        assert!(s.report.all_pass(), "{}", s.report.table());
        assert_eq!(s.report.rows.len(), 3);
    }

    #[test]
    fn ellipse_section_passes() {
        let (s, _) = shape_section("ellipse", &ShapeSpec::ellipse(2.0, 1.0).unwrap(), 256).unwrap();
        assert!(s.report.all_pass(), "{}", s.report.table());
    }
}
