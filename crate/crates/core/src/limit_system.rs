//! The vortex-wave system: a point vortex of strength γ at h(t), advected by
//! the background vorticity w, which is in turn advected by itself and by the
//! point vortex.

use crate::biotsavart::{velocity_free_space, BiotSavartError, BlobField, Frame, CORE_CUTOFF};
use crate::geometry::{perp, V2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LimitError {
    #[error("blob {index} is {distance:.3e} from the point vortex, inside 5δ")]
    BlobAtPoint { index: usize, distance: f64 },
    #[error(transparent)]
    Blob(#[from] BiotSavartError),
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexWaveState {
    pub t: f64,
    pub h: V2,
    pub gamma: f64,
    /// Lab-frame background vorticity w.
    pub field: BlobField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VwRhs {
    /// h′ = K_{ℝ²}[w](h).
    pub h_dot: V2,
    /// K_{ℝ²}[w](x_j) + γ(x_j − h)^⊥ / (2π|x_j − h|²).
    pub blob_velocities: Vec<V2>,
}

impl VortexWaveState {
    pub fn new(h: V2, gamma: f64, field: BlobField) -> Result<Self, LimitError> {
        if field.frame != Frame::Lab {
            return Err(BiotSavartError::WrongFrame(field.frame).into());
        }
        Ok(VortexWaveState { t: 0.0, h, gamma, field })
    }

    /// (γh + ΣΓ_j x_j) / (γ + ΣΓ_j), or None when the total circulation vanishes.
    pub fn circulation_centroid(&self) -> Option<V2> {
        let total = self.gamma + self.field.total_circulation();
        if total == 0.0 {
            return None;
        }
        let moment = self.field.positions.iter().zip(&self.field.gammas).fold(self.h * self.gamma, |acc, (x, g)| acc + x * *g);
        Some(moment / total)
    }
}

fn point_vortex(x: V2, h: V2, gamma: f64) -> V2 {
    let d = x - h;
    perp(d) * (gamma / (2.0 * PI * d.norm_squared()))
}

fn rhs_at(field: &BlobField, h: V2, gamma: f64) -> Result<VwRhs, LimitError> {
    let limit = CORE_CUTOFF * field.delta;
    if let Some((index, distance)) =
        field.positions.iter().map(|x| (x - h).norm()).enumerate().find(|&(_, d)| d <= limit)
    {
        return Err(LimitError::BlobAtPoint { index, distance });
    }
    let h_dot = velocity_free_space(field, h);
    let blob_velocities = field.positions.par_iter().map(|&x| velocity_free_space(field, x) + point_vortex(x, h, gamma)).collect();
    Ok(VwRhs { h_dot, blob_velocities })
}

pub fn vw_rhs(state: &VortexWaveState) -> Result<VwRhs, LimitError> {
    rhs_at(&state.field, state.h, state.gamma)
}

/// One RK4 step of (h, blob positions).
pub fn vw_step(state: &VortexWaveState, dt: f64) -> Result<VortexWaveState, LimitError> {
    if !(dt > 0.0) {
        return Err(LimitError::BadStep(dt));
    }
    let shifted = |k: &VwRhs, c: f64| -> (BlobField, V2) {
        let pos = state.field.positions.iter().zip(&k.blob_velocities).map(|(x, v)| x + v * c).collect();
        (state.field.with_positions(pos), state.h + k.h_dot * c)
    };
    let k1 = vw_rhs(state)?;
    let (f2, h2) = shifted(&k1, 0.5 * dt);
    let k2 = rhs_at(&f2, h2, state.gamma)?;
    let (f3, h3) = shifted(&k2, 0.5 * dt);
    let k3 = rhs_at(&f3, h3, state.gamma)?;
    let (f4, h4) = shifted(&k3, dt);
    let k4 = rhs_at(&f4, h4, state.gamma)?;
    let combine = |a: V2, b: V2, c: V2, d: V2| (a + (b + c) * 2.0 + d) * (dt / 6.0);
    let positions = (0..state.field.len())
        .map(|j| {
            state.field.positions[j]
                + combine(k1.blob_velocities[j], k2.blob_velocities[j], k3.blob_velocities[j], k4.blob_velocities[j])
        })
        .collect();
    Ok(VortexWaveState {
        t: state.t + dt,
        h: state.h + combine(k1.h_dot, k2.h_dot, k3.h_dot, k4.h_dot),
        gamma: state.gamma,
        field: state.field.with_positions(positions),
    })
}

/// (ρ_min, ρ_max): extreme distances of the blobs to h.
pub fn support_annulus(state: &VortexWaveState) -> (f64, f64) {
    state.field.distance_range(state.h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSample {
    pub t: f64,
    pub h1: f64,
    pub h2: f64,
    pub hdot1: f64,
    pub hdot2: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

impl LimitSample {
    pub const HEADER: [&'static str; 7] = ["t", "h1", "h2", "hdot1", "hdot2", "rho_min", "rho_max"];

    pub fn h(&self) -> V2 {
        V2::new(self.h1, self.h2)
    }
}

#[derive(Debug, Clone)]
pub struct LimitRun {
    pub samples: Vec<LimitSample>,
    /// Lab-frame blob positions at each sample.
    pub snapshots: Vec<Vec<V2>>,
    pub final_state: VortexWaveState,
    pub error: Option<LimitError>,
}

/// Integrates to `t_final` with `steps` equal steps, sampling every
/// `record_every` steps (and at t = 0).
pub fn run_limit(initial: &VortexWaveState, t_final: f64, steps: usize, record_every: usize) -> LimitRun {
    assert!(steps > 0 && record_every > 0, "run_limit needs positive step counts");
    let dt = t_final / steps as f64;
    let mut state = initial.clone();
    let mut samples = Vec::new();
    let mut snapshots = Vec::new();
    let mut record = |s: &VortexWaveState, rhs: &VwRhs| {
        let (rho_min, rho_max) = support_annulus(s);
        samples.push(LimitSample { t: s.t, h1: s.h.x, h2: s.h.y, hdot1: rhs.h_dot.x, hdot2: rhs.h_dot.y, rho_min, rho_max });
        snapshots.push(s.field.positions.clone());
    };
    for k in 0..=steps {
        let rhs = match vw_rhs(&state) {
            Ok(r) => r,
            Err(e) => return LimitRun { samples, snapshots, final_state: state, error: Some(e) },
        };
        if k % record_every == 0 || k == steps {
            record(&state, &rhs);
        }
        if k == steps {
            break;
        }
        match vw_step(&state, dt) {
            Ok(next) => state = VortexWaveState { t: (k + 1) as f64 * dt, ..next },
            Err(e) => return LimitRun { samples, snapshots, final_state: state, error: Some(e) },
        }
    }
    LimitRun { samples, snapshots, final_state: state, error: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biotsavart::{lattice_fill, PatchSpec};

    fn blobs(pos: Vec<V2>, gammas: Vec<f64>) -> BlobField {
        BlobField::new(pos, gammas, 0.05, Frame::Lab).unwrap()
    }

    #[test]
    fn empty_field_keeps_point_fixed() {
        let s = VortexWaveState::new(V2::new(0.3, -0.2), 2.0 * PI, BlobField::empty(0.05, Frame::Lab)).unwrap();
        assert_eq!(vw_rhs(&s).unwrap().h_dot, V2::zeros());
        let run = run_limit(&s, 1.0, 10, 5);
        assert!(run.error.is_none());
        assert!(run.samples.iter().all(|r| r.h() == s.h));
        assert_eq!(support_annulus(&s), (f64::INFINITY, 0.0));
    }

    #[test]
    fn ring_about_point_exerts_nothing() {
        let h = V2::new(0.5, 0.5);
        let pos: Vec<V2> = (0..16).map(|k| h + crate::geometry::rotation(k as f64 * PI / 8.0) * V2::new(1.0, 0.0)).collect();
        let s = VortexWaveState::new(h, 1.0, blobs(pos, vec![0.3; 16])).unwrap();
        assert!(vw_rhs(&s).unwrap().h_dot.norm() < 1e-15);
    }

    #[test]
    fn single_far_blob_drives_point() {
        let d = 2.0;
        let s = VortexWaveState::new(V2::zeros(), 1.0, blobs(vec![V2::new(d, 0.0)], vec![0.7])).unwrap();
        let r = vw_rhs(&s).unwrap();
        assert!((r.h_dot.norm() - 0.7 / (2.0 * PI * d)).abs() < 1e-12);
        assert_eq!(r.h_dot, velocity_free_space(&s.field, s.h));
        let rho = support_annulus(&s);
        assert_eq!(rho, (d, d));
    }

    #[test]
    fn blob_inside_core_is_an_error() {
        let s = VortexWaveState::new(V2::zeros(), 1.0, blobs(vec![V2::new(0.1, 0.0)], vec![1.0])).unwrap();
        assert!(matches!(vw_rhs(&s), Err(LimitError::BlobAtPoint { index: 0, .. })));
        assert!(matches!(vw_step(&s, -1.0), Err(LimitError::BadStep(_))));
    }

    #[test]
    fn ring_radius_two() {
        let pos: Vec<V2> = (0..8).map(|k| crate::geometry::rotation(k as f64 * PI / 4.0) * V2::new(2.0, 0.0)).collect();
        let s = VortexWaveState::new(V2::zeros(), 1.0, blobs(pos, vec![1.0; 8])).unwrap();
        let (a, b) = support_annulus(&s);
        assert!((a - 2.0).abs() < 1e-15 && (b - 2.0).abs() < 1e-15);
    }

    #[test]
    fn pair_surrogate_period_and_distance() {
        let (d, gamma) = (1.0, 2.0 * PI);
        let s = VortexWaveState::new(V2::new(-0.5, 0.0), gamma, blobs(vec![V2::new(0.5, 0.0)], vec![gamma])).unwrap();
        let period = 2.0 * PI * PI * d * d / gamma;
        let run = run_limit(&s, period, 2000, 20);
        assert!(run.error.is_none());
        let end = run.final_state.h;
        assert!((end - s.h).norm() < 1e-3 * PI * d, "{end:?}");
        let (lo, hi) = run.samples.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.rho_min), hi.max(r.rho_max)));
        assert!((hi - lo) / d < 0.01);
    }

    #[test]
    fn richardson_self_convergence() {
        let field = lattice_fill(&[PatchSpec::Disk { center: [1.0, 0.2], radius: 0.3, density: 3.0 }], 0.1, 0.1, Frame::Lab).unwrap();
        let s = VortexWaveState::new(V2::zeros(), 2.0 * PI, field).unwrap();
        let end = |n: usize| run_limit(&s, 1.0, n, n).final_state;
        let (a, b, c) = (end(100), end(200), end(400));
        let err = |x: &VortexWaveState, y: &VortexWaveState| {
            let blob = x.field.positions.iter().zip(&y.field.positions).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
            blob.max((x.h - y.h).norm())
        };
        let ratio = err(&a, &b) / err(&b, &c);
        assert!((ratio - 16.0).abs() < 0.2 * 16.0, "ratio {ratio}");
        assert_eq!(c.field.total_circulation(), s.field.total_circulation());
        let drift = (c.circulation_centroid().unwrap() - s.circulation_centroid().unwrap()).norm();
        assert!(drift < 1e-4 * s.circulation_centroid().unwrap().norm().max(1.0));
    }
}
