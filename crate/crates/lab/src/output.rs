//! CSV and JSON artifacts. Floats are written in shortest round-trip form so
//! identical runs give byte-identical files.

use crate::experiment::{CoupledOutcome, LabError, LimitOutcome};
use serde::Serialize;
use smallbody_core::coupled_system::{Abort, Record};
use smallbody_core::geometry::V2;
use smallbody_core::limit_system::LimitSample;
use smallbody_core::potential::PotentialSet;
use std::fs;
use std::path::{Path, PathBuf};

pub const ABORT_MARKER: &str = "aborted";
pub const DICTIONARY: &str = "DATA_DICTIONARY.md";

pub fn eps_tag(eps: f64) -> String {
    format!("eps{eps}")
}

fn f(x: f64) -> String {
    format!("{x}")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), LabError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_blobs(path: &Path, times: &[f64], snapshots: &[Vec<V2>], gammas: &[f64]) -> Result<(), LabError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "index", "x1", "x2", "gamma", "frame"])?;
    for (t, snap) in times.iter().zip(snapshots) {
        for (j, (x, g)) in snap.iter().zip(gammas).enumerate() {
            w.write_record([f(*t), j.to_string(), f(x.x), f(x.y), f(*g), "lab".to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Trajectory `coupled_eps<ε>.csv` and blobs `coupled_eps<ε>_blobs.csv`.
pub fn write_coupled(dir: &Path, o: &CoupledOutcome) -> Result<Vec<PathBuf>, LabError> {
    let tag = eps_tag(o.summary.eps);
    let traj = dir.join(format!("coupled_{tag}.csv"));
    let mut w = csv::Writer::from_path(&traj)?;
    w.write_record(Record::HEADER)?;
    for r in &o.run.records {
        w.write_record([r.t, r.h1, r.h2, r.theta, r.l1, r.l2, r.r, r.energy, r.gamma, r.rho_min, r.rho_max].map(f))?;
    }
    w.flush()?;
    let blobs = dir.join(format!("coupled_{tag}_blobs.csv"));
    let times: Vec<f64> = o.run.records.iter().map(|r| r.t).collect();
    write_blobs(&blobs, &times, &o.run.snapshots, &o.run.final_state.field.gammas)?;
    Ok(vec![traj, blobs])
}

/// Trajectory `limit.csv` and blobs `limit_blobs.csv`.
pub fn write_limit(dir: &Path, o: &LimitOutcome) -> Result<Vec<PathBuf>, LabError> {
    let traj = dir.join("limit.csv");
    let mut w = csv::Writer::from_path(&traj)?;
    w.write_record(LimitSample::HEADER)?;
    for s in &o.run.samples {
        w.write_record([s.t, s.h1, s.h2, s.hdot1, s.hdot2, s.rho_min, s.rho_max].map(f))?;
    }
    w.flush()?;
    let blobs = dir.join("limit_blobs.csv");
    let times: Vec<f64> = o.run.samples.iter().map(|s| s.t).collect();
    write_blobs(&blobs, &times, &o.run.snapshots, &o.run.final_state.field.gammas)?;
    Ok(vec![traj, blobs])
}

#[derive(Debug, Clone, Serialize)]
struct AbortEntry<'a> {
    eps: f64,
    abort: &'a Abort,
}

/// Writes the `aborted` marker listing every aborted run, or removes a stale
/// marker when nothing aborted. Returns true when a marker was written.
pub fn write_abort_marker(dir: &Path, runs: &[CoupledOutcome]) -> Result<bool, LabError> {
    let entries: Vec<AbortEntry> =
        runs.iter().filter_map(|o| o.run.abort.as_ref().map(|abort| AbortEntry { eps: o.summary.eps, abort })).collect();
    let path = dir.join(ABORT_MARKER);
    if entries.is_empty() {
        if path.exists() {
            fs::remove_file(&path)?;
        }
        return Ok(false);
    }
    write_json(&path, &entries)?;
    Ok(true)
}

#[derive(Debug, Clone, Serialize)]
pub struct PotentialSummary {
    pub shape: String,
    pub panels: usize,
    pub m: [[f64; 5]; 5],
    pub m_flat: [[f64; 2]; 2],
    pub xi: [f64; 2],
    pub eta: [f64; 2],
    pub mu: [f64; 2],
    pub mu_hat: [f64; 2],
    pub mu_check: [f64; 2],
    pub area: f64,
    pub second_moments: [f64; 3],
    pub circumradius: f64,
    pub neumann_residuals: [f64; 5],
}

pub fn potential_summary(pot: &PotentialSet, shape: &str) -> PotentialSummary {
    let md = &pot.mass;
    let mf = md.m_flat;
    PotentialSummary {
        shape: shape.to_string(),
        panels: pot.mesh().n,
        m: md.m,
        m_flat: [[mf[(0, 0)], mf[(0, 1)]], [mf[(1, 0)], mf[(1, 1)]]],
        xi: [md.xi.x, md.xi.y],
        eta: [md.eta.x, md.eta.y],
        mu: [md.mu.x, md.mu.y],
        mu_hat: [md.mu_hat.x, md.mu_hat.y],
        mu_check: [md.mu_check.x, md.mu_check.y],
        area: md.moments.area,
        second_moments: [md.moments.m6, md.moments.m7, md.moments.m8],
        circumradius: pot.mesh().circumradius(),
        neumann_residuals: std::array::from_fn(|i| pot.phi[i].residual),
    }
}

/// `boundary.csv`: nodes, normals, weights, Φ₁..Φ₅ and H¹ on the unit-size boundary.
pub fn write_boundary(dir: &Path, pot: &PotentialSet) -> Result<PathBuf, LabError> {
    let path = dir.join("boundary.csv");
    let mesh = pot.mesh();
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["index", "x1", "x2", "n1", "n2", "weight", "phi1", "phi2", "phi3", "phi4", "phi5", "h1", "h2"])?;
    for j in 0..mesh.n {
        let (x, n, h) = (mesh.points[j], mesh.normals[j], pot.harmonic.boundary_h[j]);
        let mut row = vec![j.to_string(), f(x.x), f(x.y), f(n.x), f(n.y), f(mesh.weights[j])];
        row.extend((0..5).map(|i| f(pot.phi[i].boundary_values[j])));
        row.extend([f(h.x), f(h.y)]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(path)
}

pub fn write_dictionary(dir: &Path) -> Result<PathBuf, LabError> {
    let path = dir.join(DICTIONARY);
    fs::write(&path, DICTIONARY_TEXT)?;
    Ok(path)
}

const DICTIONARY_TEXT: &str = "# Data dictionary

All quantities are nondimensional: lengths in units of the unit-size body,
times in the units of the configuration. Every CSV has a header row and a
fixed column order. Floats use the shortest decimal form that round-trips.

## coupled_eps<ε>.csv (one row per record)

| column | meaning |
|---|---|
| t | time |
| h1, h2 | lab-frame position of the body centre of mass |
| theta | body orientation angle |
| l1, l2 | body-frame translational velocity ℓ |
| r | angular velocity |
| energy | conserved energy H^ε, NaN unless `run.energy = true` |
| gamma | circulation around the body |
| rho_min, rho_max | smallest and largest blob distance to the body centre |

## limit.csv (one row per record)

| column | meaning |
|---|---|
| t | time |
| h1, h2 | point-vortex position |
| hdot1, hdot2 | point-vortex velocity K[w](h) |
| rho_min, rho_max | smallest and largest blob distance to h |

## *_blobs.csv (one row per blob and record)

| column | meaning |
|---|---|
| t | time |
| index | lattice index; equal indices are matched between runs |
| x1, x2 | blob position |
| gamma | blob circulation |
| frame | coordinate frame of x1, x2 (always `lab`) |

## boundary.csv (potentials command)

| column | meaning |
|---|---|
| index | boundary node |
| x1, x2 | node position on the unit-size body |
| n1, n2 | unit normal pointing into the body |
| weight | quadrature weight |
| phi1..phi5 | Kirchhoff potentials at the node |
| h1, h2 | harmonic field at the node |

## JSON files

- `summary.json`: configuration echo and per-run summaries (steps, aborts,
  drifts, normal-form residual constants).
- `report.json` (converge): per-ε sup distances between body and point
  vortex and between matched blobs, annulus-exit events, log-log slopes.
  The blob metric is described in its `w_metric` field.
- `potentials.json`: mass coefficients m_ij (i, j = 1..5), M♭, ξ, η, μ
  vectors, geometric moments.
- `identities.json` (check-identities): every identity row with computed
  value, expected value, error and tolerance.
- `aborted`: present only when a run aborted; lists ε, reason
  (collision, annulus-exit, dt-guard), time and detail.
";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eps_tags_are_stable() {
        assert_eq!(eps_tag(0.2), "eps0.2");
        assert_eq!(eps_tag(0.05), "eps0.05");
        assert_eq!(f(f64::NAN), "NaN");
        assert_eq!(f(0.1 + 0.2), "0.30000000000000004");
    }

    #[test]
    fn dictionary_lists_every_header() {
        for col in Record::HEADER.iter().chain(LimitSample::HEADER.iter()) {
            assert!(DICTIONARY_TEXT.contains(&format!("| {col}")) || DICTIONARY_TEXT.contains(&format!(", {col}")), "{col}");
        }
    }
}
