//! Exit codes and artifacts of the command-line runner.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_strictmodes"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn scenarios_lists_both_builtins() {
    let out = bin().arg("scenarios").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("paper-3-1") && text.contains("paper-3-2"));
    assert!(text.lines().count() >= 2);
    let show = bin().args(["scenarios", "--show", "paper-3-2"]).output().unwrap();
    assert!(String::from_utf8(show.stdout).unwrap().contains("beta = [-47.86]"));
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write(dir.path(), "bad.toml", "experiment = \"linearize\"\n[integrator]\ndt = \"fast\"\n");
    let st = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).status().unwrap();
    assert_eq!(st.code(), Some(2));
    assert!(!out_dir.exists());

    let cfg = write(dir.path(), "neg.toml", "experiment = \"modes-find\"\n[modes]\nenergies = [0.0]\n");
    let st = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).status().unwrap();
    assert_eq!(st.code(), Some(2));
    assert!(!out_dir.exists());

    let st = bin().args(["run", "--scenario", "no-such-scenario"]).arg("--out").arg(&out_dir).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn subcommand_and_config_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "lin.toml", "experiment = \"linearize\"\n");
    let st = bin().arg("geodesic").arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("o")).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn linearize_and_geodesic_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("lin");
    let st = bin().arg("linearize").arg("--out").arg(&o).status().unwrap();
    assert!(st.success());
    let csv = std::fs::read_to_string(o.join("linear_modes.csv")).unwrap();
    assert!(csv.starts_with("omega,period,v1,v2\n"));
    assert!(std::fs::read_to_string(o.join("report.toml")).unwrap().contains("verdict = \"pass\""));

    let o = dir.path().join("geo");
    assert!(bin().arg("geodesic").arg("--out").arg(&o).status().unwrap().success());
    assert!(o.join("geodesic.csv").is_file());
}

#[test]
fn tolerance_breach_exits_4_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "v.toml", "[verify]\ntol = 1e-6\nenforce = true\n");
    let o = dir.path().join("v");
    let st = bin().args(["modes", "verify", "--config"]).arg(&cfg).arg("--out").arg(&o).status().unwrap();
    assert_eq!(st.code(), Some(4));
    assert!(o.join("residuals.csv").is_file());
}

#[test]
fn energy_drift_failure_exits_4() {
    // a coarse step breaks the drift bound: the run aborts and writes nothing
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("s");
    let st = bin().args(["simulate", "--dt", "0.05", "--tol-energy", "1e-9"]).arg("--out").arg(&o).status().unwrap();
    assert_eq!(st.code(), Some(4));
    assert!(!o.exists());
}

#[test]
fn curve_file_verification_and_invariance() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("s,q1,q2\n");
    for i in 0..=100 {
        let t = -0.5 + 0.01 * i as f64;
        csv.push_str(&format!("{i},{t},{}\n", -t));
    }
    write(dir.path(), "line.csv", &csv);
    let cfg = write(
        dir.path(),
        "inv.toml",
        "experiment = \"invariance\"\n[invariance]\nhorizon = 1.0\n[invariance.curve]\nkind = \"file\"\npath = \"line.csv\"\n",
    );
    let o = dir.path().join("inv");
    let st = bin().arg("invariance").arg("--config").arg(&cfg).arg("--out").arg(&o).status().unwrap();
    assert!(st.success());
    let text = std::fs::read_to_string(o.join("invariance.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}
