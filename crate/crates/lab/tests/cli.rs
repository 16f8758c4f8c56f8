use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_smallbody-lab"))
}

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], config: &Path, out: &Path) -> i32 {
    let status = bin().args(args).arg("--config").arg(config).arg("--out").arg(out).status().unwrap();
    status.code().unwrap()
}

const SMALL: &str = r#"
[shape]
panels = 32
preset = { kind = "ellipse", a = 1.0, b = 0.6 }
[body]
m1 = 1.0
j1 = 0.3
alpha = 2.0
gamma = 6.283185307179586
ell0 = "well-prepared"
[vorticity]
spacing = 0.2
delta = 0.15
patches = [{ kind = "disk", center = [1.2, 0.3], radius = 0.3, density = 2.0 }]
[run]
eps = [0.2, 0.1]
t_final = 0.04
dt = 0.002
cfl = 0.2
record_interval = 0.01
energy = true
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn at_rest_sweep_reports_zeros() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["converge"], &preset("at_rest.toml"), tmp.path()), 0);
    let report = read_json(&tmp.path().join("report.json"));
    for row in report["rows"].as_array().unwrap() {
        assert_eq!(row["h_sup"], 0.0);
        assert_eq!(row["w_sup"], 0.0);
        assert_eq!(row["annulus_exit"], false);
    }
    let csv = fs::read_to_string(tmp.path().join("coupled_eps0.2.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,h1,h2,theta,l1,l2,r,energy,gamma,rho_min,rho_max");
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cols[1..8].iter().all(|v| *v == 0.0), "{line}");
    }
    assert!(tmp.path().join("DATA_DICTIONARY.md").exists());
    assert!(!tmp.path().join("aborted").exists());
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&["converge", "--threads", "1"], &cfg, &a), 0);
    assert_eq!(run(&["converge", "--threads", "3"], &cfg, &b), 0);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 8, "{names:?}");
    for name in names {
        let (x, y) = (fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
        assert!(x == y, "{name:?} differs");
    }
    let report = read_json(&a.join("report.json"));
    assert!(report["w_metric"].as_str().unwrap().contains("lattice index"));
    let blobs = fs::read_to_string(a.join("limit_blobs.csv")).unwrap();
    assert!(blobs.starts_with("t,index,x1,x2,gamma,frame\n"));
    assert!(blobs.lines().skip(1).all(|l| l.ends_with(",lab")));
}

#[test]
fn configuration_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["converge"], &tmp.path().join("missing.toml"), tmp.path()), 1);
    let cfg = write_config(tmp.path(), &SMALL.replace("eps = [0.2, 0.1]", "eps = [0.1, 0.2]"));
    assert_eq!(run(&["simulate-coupled"], &cfg, tmp.path()), 1);
    let cfg = write_config(tmp.path(), &SMALL.replace("center = [1.2, 0.3]", "center = [0.1, 0.0]"));
    assert_eq!(run(&["simulate-limit"], &cfg, tmp.path()), 1);
    let status = bin().arg("converge").status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn aborted_runs_exit_with_two_and_leave_a_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace("ell0 = \"well-prepared\"", "ell0 = [60.0, 0.0]").replace("cfl = 0.2", "cfl = 1.0").replace("dt = 0.002", "dt = 0.01");
    let cfg = write_config(tmp.path(), &text);
    assert_eq!(run(&["simulate-coupled"], &cfg, tmp.path()), 2);
    let marker = read_json(&tmp.path().join("aborted"));
    let entries = marker.as_array().unwrap();
    assert!(!entries.is_empty());
    for e in entries {
        let reason = e["abort"]["reason"].as_str().unwrap();
        assert!(["collision", "annulus-exit", "dt-guard"].contains(&reason), "{reason}");
    }
    assert!(tmp.path().join("coupled_eps0.2.csv").exists());
    let summary = read_json(&tmp.path().join("summary.json"));
    assert!(!summary["coupled"][0]["abort"].is_null());
}

#[test]
fn potentials_and_identity_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    assert_eq!(run(&["potentials"], &cfg, tmp.path()), 0);
    let pot = read_json(&tmp.path().join("potentials.json"));
    let m = pot["m"].as_array().unwrap();
    for i in 0..5 {
        for j in 0..5 {
            assert_eq!(m[i][j], m[j][i]);
        }
    }
    let boundary = fs::read_to_string(tmp.path().join("boundary.csv")).unwrap();
    assert_eq!(boundary.lines().count(), 33);
    assert_eq!(run(&["check-identities"], &cfg, tmp.path()), 0);
    let ids = read_json(&tmp.path().join("identities.json"));
    assert_eq!(ids["all_pass"], true);
    assert!(ids["sections"].as_array().unwrap().len() >= 5);
}
