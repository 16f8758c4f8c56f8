//! Distances between a coupled trajectory and the limit trajectory, and the
//! ε-sweep convergence report.

use crate::experiment::{CoupledOutcome, CoupledSummary, LimitOutcome, LimitSummary};
use serde::{Deserialize, Serialize};
use smallbody_core::coupled_system::{AbortReason, CoupledRun};
use smallbody_core::geometry::V2;
use smallbody_core::limit_system::LimitRun;
use thiserror::Error;

/// Matched blobs share their lattice index in both systems.
pub const BLOB_METRIC: &str = "blob-index transport distance: mean over j of |x_j^eps(t) - x_j(t)|, \
blobs matched by their common lattice index (a surrogate for weak-* convergence of the vorticity)";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompareError {
    #[error("time grids differ at sample {index}: {a} vs {b}")]
    TimeGrid { index: usize, a: f64, b: f64 },
    #[error("blob counts differ at sample {index}: {a} vs {b}")]
    BlobCount { index: usize, a: usize, b: usize },
}

/// Point trajectory and lab-frame blob positions on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub h: Vec<V2>,
    pub blobs: Vec<Vec<V2>>,
}

impl Trajectory {
    pub fn from_coupled(run: &CoupledRun) -> Self {
        Trajectory { t: run.records.iter().map(|r| r.t).collect(), h: run.records.iter().map(|r| r.h()).collect(), blobs: run.snapshots.clone() }
    }

    pub fn from_limit(run: &LimitRun) -> Self {
        Trajectory { t: run.samples.iter().map(|s| s.t).collect(), h: run.samples.iter().map(|s| s.h()).collect(), blobs: run.snapshots.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub t: Vec<f64>,
    pub h_distance: Vec<f64>,
    pub w_distance: Vec<f64>,
    pub h_sup: f64,
    pub w_sup: f64,
}

/// Distances over the common prefix of the two time grids.
pub fn compare(a: &Trajectory, b: &Trajectory) -> Result<Comparison, CompareError> {
    let n = a.t.len().min(b.t.len());
    let mut out = Comparison { t: Vec::with_capacity(n), h_distance: Vec::new(), w_distance: Vec::new(), h_sup: 0.0, w_sup: 0.0 };
    for k in 0..n {
        let (ta, tb) = (a.t[k], b.t[k]);
        if (ta - tb).abs() > 1e-9 * ta.abs().max(1.0) {
            return Err(CompareError::TimeGrid { index: k, a: ta, b: tb });
        }
        let (xa, xb) = (&a.blobs[k], &b.blobs[k]);
        if xa.len() != xb.len() {
            return Err(CompareError::BlobCount { index: k, a: xa.len(), b: xb.len() });
        }
        let dh = (a.h[k] - b.h[k]).norm();
        let dw = if xa.is_empty() { 0.0 } else { xa.iter().zip(xb).map(|(p, q)| (p - q).norm()).sum::<f64>() / xa.len() as f64 };
        out.t.push(ta);
        out.h_distance.push(dh);
        out.w_distance.push(dw);
        out.h_sup = out.h_sup.max(dh);
        out.w_sup = out.w_sup.max(dw);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub eps: f64,
    pub h_sup: f64,
    pub w_sup: f64,
    /// End of the compared window: T, or the time of an abort.
    pub t_eps: f64,
    pub annulus_exit: bool,
    pub run: CoupledSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    /// Least-squares slope of ln sup|h^ε − h| against ln ε.
    pub h: Option<f64>,
    pub w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub w_metric: String,
    pub t_final: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub rows: Vec<ReportRow>,
    pub limit: LimitSummary,
    pub slopes: Slopes,
    pub h_strictly_decreasing: bool,
    pub w_strictly_decreasing: bool,
}

/// Least-squares slope of ln y against ln x; None with fewer than two
/// positive points.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

pub fn convergence_report(
    t_final: f64,
    alpha: f64,
    gamma: f64,
    coupled: &[CoupledOutcome],
    limit: &LimitOutcome,
) -> Result<ConvergenceReport, CompareError> {
    let reference = Trajectory::from_limit(&limit.run);
    let mut rows = Vec::with_capacity(coupled.len());
    for o in coupled {
        let c = compare(&Trajectory::from_coupled(&o.run), &reference)?;
        rows.push(ReportRow {
            eps: o.summary.eps,
            h_sup: c.h_sup,
            w_sup: c.w_sup,
            t_eps: o.run.abort.as_ref().map(|a| a.t).unwrap_or(t_final),
            annulus_exit: o.run.abort.as_ref().is_some_and(|a| a.reason == AbortReason::AnnulusExit),
            run: o.summary.clone(),
        });
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let hs: Vec<f64> = rows.iter().map(|r| r.h_sup).collect();
    let ws: Vec<f64> = rows.iter().map(|r| r.w_sup).collect();
    Ok(ConvergenceReport {
        w_metric: BLOB_METRIC.to_string(),
        t_final,
        alpha,
        gamma,
        limit: limit.summary.clone(),
        slopes: Slopes { h: loglog_slope(&eps, &hs), w: loglog_slope(&eps, &ws) },
        h_strictly_decreasing: strictly_decreasing(&hs),
        w_strictly_decreasing: strictly_decreasing(&ws),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(shift: V2) -> Trajectory {
        let t: Vec<f64> = (0..5).map(|k| 0.1 * k as f64).collect();
        let h = t.iter().map(|&s| V2::new(s, -s) + shift).collect();
        let blobs = t.iter().map(|&s| vec![V2::new(1.0 + s, 0.0) + shift, V2::new(0.0, 2.0 - s) + shift]).collect();
        Trajectory { t, h, blobs }
    }

    #[test]
    fn identical_trajectories_are_at_distance_zero() {
        let a = line(V2::zeros());
        let c = compare(&a, &a).unwrap();
        assert_eq!((c.h_sup, c.w_sup), (0.0, 0.0));
        assert_eq!(c.t.len(), 5);
    }

    #[test]
    fn shift_by_d_gives_d() {
        let d = V2::new(0.3, 0.4);
        let c = compare(&line(d), &line(V2::zeros())).unwrap();
        assert!((c.h_sup - 0.5).abs() < 1e-15 && (c.w_sup - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mismatches_are_reported() {
        let a = line(V2::zeros());
        let mut b = a.clone();
        b.blobs[2].pop();
        assert_eq!(compare(&a, &b), Err(CompareError::BlobCount { index: 2, a: 2, b: 1 }));
        let mut c = a.clone();
        c.t[1] = 0.15;
        assert!(matches!(compare(&a, &c), Err(CompareError::TimeGrid { index: 1, .. })));
    }

    #[test]
    fn shorter_run_is_compared_on_its_prefix() {
        let a = line(V2::zeros());
        let mut b = line(V2::new(0.0, 1.0));
        b.t.truncate(3);
        b.h.truncate(3);
        b.blobs.truncate(3);
        let c = compare(&a, &b).unwrap();
        assert_eq!(c.t.len(), 3);
        assert_eq!(c.h_sup, 1.0);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [0.2, 0.1, 0.05];
        let y: Vec<f64> = x.iter().map(|e: &f64| 3.0 * e.powi(2)).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&[0.1], &[1.0]), None);
        assert_eq!(loglog_slope(&[0.2, 0.1], &[0.0, 0.0]), None);
        assert!(strictly_decreasing(&[3.0, 2.0, 1.0]) && !strictly_decreasing(&[3.0, 3.0]));
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_shift_exact(dx in -2.0..2.0f64, dy in -2.0..2.0f64) {
            let d = V2::new(dx, dy);
            let a = line(d);
            let b = line(V2::zeros());
            let ab = compare(&a, &b).unwrap();
            let ba = compare(&b, &a).unwrap();
            prop_assert_eq!(ab.h_sup, ba.h_sup);
            prop_assert!((ab.h_sup - d.norm()).abs() < 1e-12);
            prop_assert!((ab.w_sup - d.norm()).abs() < 1e-12);
        }
    }
}
