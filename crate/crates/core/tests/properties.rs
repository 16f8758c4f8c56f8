use nalgebra::Matrix2;
use proptest::prelude::*;
use smallbody_core::biotsavart::{
    advect, lattice_fill, velocity_free_space, velocity_free_space_many, velocity_gradient, velocity_jacobian, BlobField, Frame,
    PatchSpec,
};
use smallbody_core::contour::{contour_integral, Weight};
use smallbody_core::coupled_system::{init_coupled_with, run_coupled, CoupledParams, RunOptions};
use smallbody_core::geometry::{build_mesh, geometric_moments, perp, ShapeSpec, V2};
use smallbody_core::limit_system::{vw_rhs, VortexWaveState};
use smallbody_core::potential::{GenuineMass, PotentialSet};

fn shape_strategy() -> impl Strategy<Value = ShapeSpec> {
    (-0.08..0.08f64, -0.08..0.08f64, -0.05..0.05f64, -0.05..0.05f64, -0.1..0.1f64, -0.1..0.1f64).prop_map(|(a2, b2, a3, b3, o1, o2)| {
        ShapeSpec::perturbed_disk(1.0, &[(2, a2, b2), (3, a3, b3)]).unwrap().with_mass_offset([o1, o2]).unwrap()
    })
}

fn blob_field(seed_positions: &[(f64, f64, f64)], frame: Frame) -> BlobField {
    let positions = seed_positions.iter().map(|&(x, y, _)| V2::new(x, y)).collect();
    let gammas = seed_positions.iter().map(|&(_, _, g)| g).collect();
    BlobField::new(positions, gammas, 0.1, frame).unwrap()
}

fn blobs_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((1.5..3.0f64, 0.0..std::f64::consts::TAU, -1.0..1.0f64), 3..12)
        .prop_map(|v| v.into_iter().map(|(r, a, g)| (r * a.cos(), r * a.sin(), g)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn boundary_moment_identities(shape in shape_strategy()) {
        let mesh = build_mesh(&shape, 128).unwrap();
        let area = geometric_moments(&mesh).area;
        let n1 = mesh.integrate(|j| mesh.normals[j].x);
        let n2 = mesh.integrate(|j| mesh.normals[j].y);
        let torque = mesh.integrate(|j| perp(mesh.points[j]).dot(&mesh.normals[j]));
        prop_assert!(n1.abs() < 1e-9 && n2.abs() < 1e-9 && torque.abs() < 1e-9);
        for i in 0..2 {
            for k in 0..2 {
                let v = mesh.integrate(|j| mesh.points[j][k] * mesh.normals[j][i]);
                let expected = if i == k { -area } else { 0.0 };
                prop_assert!((v - expected).abs() < 1e-8, "i={i} k={k}: {v} vs {expected}");
            }
        }
    }

    #[test]
    fn area_converges_spectrally(shape in shape_strategy()) {
        let exact = shape.fourier_area();
        let coarse = geometric_moments(&build_mesh(&shape, 16).unwrap()).area;
        let fine = geometric_moments(&build_mesh(&shape, 64).unwrap()).area;
        prop_assert!((fine - exact).abs() <= (coarse - exact).abs() + 1e-13);
        prop_assert!((fine - exact).abs() < 1e-12);
    }

    #[test]
    fn potential_gradients_have_no_circulation_or_flux(shape in shape_strategy()) {
        let pot = PotentialSet::solve(&shape, 96).unwrap();
        for i in 1..=5 {
            let c = contour_integral(pot.mesh(), Weight::One, &pot.boundary_grad_phi_eps(i, 1.0));
            prop_assert!(c.norm() < 1e-8, "i={i}: {c}");
        }
    }

    #[test]
    fn added_mass_is_positive_semidefinite(shape in shape_strategy()) {
        let pot = PotentialSet::solve(&shape, 96).unwrap();
        let m = pot.mass.m;
        for i in 0..5 {
            for j in 0..5 {
                prop_assert!((m[i][j] - m[j][i]).abs() < 1e-8);
            }
        }
        let eig = pot.mass.m_a.symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() >= -1e-10, "{eig}");
        prop_assert!(pot.mass.m_flat_min_eigen() > 0.0);
    }

    #[test]
    fn potentials_follow_the_scaling_laws(shape in shape_strategy(), eps in 0.05..0.5f64, angle in 0.0..std::f64::consts::TAU, dist in 1.3..3.0f64) {
        let pot = PotentialSet::solve(&shape, 64).unwrap();
        let small = PotentialSet::solve(&shape.scale(eps).unwrap(), 64).unwrap();
        let x = V2::new(angle.cos(), angle.sin()) * (dist * eps);
        for i in 1..=5 {
            let (a, b) = (small.phi1(i, x), pot.phi_eps(i, eps, x));
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "Φ_{i}: {a} vs {b}");
            let (ga, gb) = (small.grad_phi1(i, x), pot.grad_phi_eps(i, eps, x));
            prop_assert!((ga - gb).norm() < 1e-10 * (1.0 + gb.norm()), "∇Φ_{i}");
        }
        let (ha, hb) = (small.h1(x), pot.h_eps(eps, x));
        prop_assert!((ha - hb).norm() < 1e-10 * (1.0 + hb.norm()));
        let ma = pot.mass.added_mass_eps(eps);
        let direct = small.mass.m_a;
        prop_assert!((ma - direct).abs().max() < 1e-10 * (1.0 + direct.abs().max()));
    }

    #[test]
    fn velocity_gradient_is_traceless_symmetric_and_matches_differences(blobs in blobs_strategy()) {
        let field = blob_field(&blobs, Frame::Lab);
        let x = V2::zeros();
        let g = velocity_gradient(&field, x);
        prop_assert!(!g.flagged);
        let jac = velocity_jacobian(&field, x);
        prop_assert!((jac - g.matrix()).abs().max() < 1e-12);
        let step = 1e-5;
        let fd = Matrix2::from_columns(&[
            (velocity_free_space(&field, V2::new(step, 0.0)) - velocity_free_space(&field, V2::new(-step, 0.0))) / (2.0 * step),
            (velocity_free_space(&field, V2::new(0.0, step)) - velocity_free_space(&field, V2::new(0.0, -step))) / (2.0 * step),
        ]);
        prop_assert!((fd - jac).abs().max() < 1e-7 * (1.0 + jac.abs().max()), "{fd} vs {jac}");
    }

    #[test]
    fn advection_preserves_circulation(blobs in blobs_strategy(), dt in 0.001..0.05f64) {
        let field = blob_field(&blobs, Frame::Lab);
        let (moved, _) = advect(&field, |xs: &[V2]| {
            let f = field.with_positions(xs.to_vec());
            velocity_free_space_many(&f, xs)
        }, dt, |_| false, 2).unwrap();
        prop_assert_eq!(moved.gammas.clone(), field.gammas.clone());
        prop_assert_eq!(moved.total_circulation(), field.total_circulation());
    }

    #[test]
    fn limit_point_velocity_is_the_free_space_field(blobs in blobs_strategy(), gamma in -5.0..5.0f64, h1 in -0.3..0.3f64, h2 in -0.3..0.3f64) {
        let field = blob_field(&blobs, Frame::Lab);
        let h = V2::new(h1, h2);
        let state = VortexWaveState::new(h, gamma, field.clone()).unwrap();
        prop_assert_eq!(vw_rhs(&state).unwrap().h_dot, velocity_free_space(&field, h));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn disk_keeps_its_angular_velocity(r0 in -2.0..2.0f64, l1 in -1.0..1.0f64, l2 in -1.0..1.0f64, gamma in -6.0..6.0f64) {
        let pot = PotentialSet::solve(&ShapeSpec::disk(1.0).unwrap(), 32).unwrap();
        let params = CoupledParams { eps: 0.2, alpha: 2.0, genuine: GenuineMass { m1: 1.0, j1: 0.5 }, gamma };
        let patch = PatchSpec::Disk { center: [1.2, 0.2], radius: 0.25, density: 1.5 };
        let (sys, st, _) = init_coupled_with(pot, params, &[patch.clone()], 0.15, 0.12, V2::new(l1, l2), r0).unwrap();
        let total = lattice_fill(&[patch], 0.15, 0.12, Frame::Body).unwrap().total_circulation();
        let run = run_coupled(&sys, &st, &RunOptions { dt: 2e-3, t_final: 0.02, record_every: 5, energy: false });
        prop_assert!(run.abort.is_none(), "{:?}", run.abort);
        for rec in &run.records {
            prop_assert!((rec.r - r0).abs() < 1e-9 * (1.0 + r0.abs()), "r = {} vs {r0}", rec.r);
            prop_assert_eq!(rec.gamma, gamma);
        }
        prop_assert_eq!(run.final_state.field.total_circulation(), total);
    }
}
