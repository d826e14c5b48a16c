use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const MM1: &str = "d = 1\nlambda = [1.0]\nmu = [4.0]\nrouting = [[0.0]]\n";
const TWO_STATION: &str = "d = 2\nlambda = [1.0, 1.0]\nmu = [4.0, 5.0]\nrouting = [[0.0, 0.2], [0.2, 0.0]]\n";

fn jnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jnet")).args(args).output().unwrap()
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn close(v: &Value, target: f64, tol: f64) -> bool {
    (v.as_f64().unwrap() - target).abs() <= tol
}

#[test]
fn analyze_reports_closed_forms() {
    let dir = TempDir::new().unwrap();
    let mm1 = write_config(&dir, "mm1.toml", MM1);
    let v = json_of(&jnet(&["analyze", "--config", &mm1, "--json"]));
    assert_eq!(v["schema"], 1);
    assert_eq!(v["traffic"]["classification"], "Ergodic");
    assert_eq!(v["log_rstar"], 0.0);
    assert_eq!(v["log_rstar_e"], -1.0);

    let two = write_config(&dir, "two.toml", TWO_STATION);
    let v = json_of(&jnet(&["analyze", "--config", &two, "--json"]));
    assert!(close(&v["log_rstar_e"], -0.746749, 1e-6));

    let tr = write_config(&dir, "tr.toml", "d = 1\nlambda = [4.0]\nmu = [1.0]\nrouting = [[0.0]]\n");
    let v = json_of(&jnet(&["analyze", "--config", &tr, "--json"]));
    assert_eq!(v["traffic"]["classification"], "Transient");
    assert!(close(&v["log_rstar"], -1.0, 1e-8));
    assert!(close(&v["log_rstar_e"], -1.0, 1e-12));
}

#[test]
fn exit_codes_follow_the_taxonomy() {
    let dir = TempDir::new().unwrap();
    let unknown = write_config(&dir, "a.toml", &format!("{MM1}colour = 3\n"));
    assert_eq!(jnet(&["analyze", "--config", &unknown]).status.code(), Some(1));
    assert_eq!(jnet(&["analyze", "--config", "/nonexistent/x.toml"]).status.code(), Some(1));
    assert_eq!(jnet(&["analyze"]).status.code(), Some(1));

    let invalid = write_config(&dir, "b.toml", "d = 1\nlambda = [1.0]\nmu = [-4.0]\nrouting = [[0.0]]\n");
    assert_eq!(jnet(&["analyze", "--config", &invalid]).status.code(), Some(2));

    // Survival never drops into the fit window before t_max.
    let short = write_config(&dir, "c.toml", &format!("{MM1}[montecarlo]\nn_traj = 1000\nt_max = 0.02\nt_step = 0.01\n"));
    let out = jnet(&["simulate", "--config", &short]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("montecarlo"));
}

#[test]
fn json_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "mm1.toml",
        &format!("{MM1}[montecarlo]\nn_traj = 5000\nt_max = 10.0\nqsd_box = 30\n[pathopt]\nm = 4\n"),
    );
    for cmd in ["simulate", "pathopt", "analyze"] {
        let a = jnet(&[cmd, "--config", &cfg, "--json", "--seed", "9"]);
        let b = jnet(&[cmd, "--config", &cfg, "--json", "--seed", "9"]);
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout, "{cmd}");
    }
}

#[test]
fn out_directory_receives_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "two.toml", &format!("{TWO_STATION}[spectral]\nk = [-1, 0]\nn = [8, 16]\n"));
    let out = dir.path().join("run");
    let o = jnet(&["spectral", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(out.join("spectral.csv")).unwrap();
    assert!(csv.starts_with("k,N,rho,theta,residual,iterations,converged\n"));
    assert_eq!(csv.lines().count(), 5);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "spectral");
    assert_eq!(report["killing_monotonicity_violations"], 0);

    let loop_dir = dir.path().join("loop");
    let o = jnet(&["pathopt", "--config", &cfg, "--out", loop_dir.to_str().unwrap()]);
    assert!(o.status.success());
    let l: Value = serde_json::from_str(&std::fs::read_to_string(loop_dir.join("loop.json")).unwrap()).unwrap();
    let first = &l.as_array().unwrap()[0];
    assert_eq!(first[0], 0.0);
    assert_eq!(first[1].as_array().unwrap().len(), 2);
}

#[test]
fn csv_flag_prints_the_table() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "mm1.toml", &format!("{MM1}[spectral]\nk = [0]\nn = [50]\n"));
    let o = jnet(&["spectral", "--config", &cfg, "--csv"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("k,N,"));
    assert_eq!(jnet(&["analyze", "--config", &cfg, "--csv"]).status.code(), Some(1));
}

#[test]
fn cluster_demo_passes_its_invariants() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &format!("{MM1}[cluster]\nn = 1.0\neps = 0.5\nhorizon = 2\n"));
    let v = json_of(&jnet(&["cluster-demo", "--config", &cfg, "--json"]));
    assert_eq!(v["invariants"]["connectivity"]["passed"], true);
    assert_eq!(v["endpoint_containment"]["passed"], true);
    assert_eq!(v["count_within_bound"], true);
    assert!(v["count"]["exact"].is_string());
}

#[test]
fn crosscheck_single_queue() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "mm1.toml",
        &format!("{MM1}[crosscheck]\nn = 400\nk = 0\n[montecarlo]\nn_traj = 100000\nt_max = 10.0\n"),
    );
    let v = json_of(&jnet(&["crosscheck", "--config", &cfg, "--json"]));
    assert_eq!(v["pass"], true);
    let rows = v["rows"].as_array().unwrap();
    let e = &rows[1]["estimates"];
    for oracle in ["closed_form", "pathopt", "spectral", "montecarlo"] {
        assert!(close(&e[oracle], -1.0, 0.05), "{oracle}: {}", e[oracle]);
    }
    for oracle in ["closed_form", "pathopt", "spectral"] {
        assert!(close(&rows[0]["estimates"][oracle], 0.0, 0.02));
    }
}

#[test]
fn help_exits_cleanly() {
    let o = jnet(&["--help"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("crosscheck"));
    assert!(Path::new(env!("CARGO_BIN_EXE_jnet")).exists());
}
