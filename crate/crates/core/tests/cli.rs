mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::config_path;

fn vdc_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vdc-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn shipped(name: &str) -> String {
    config_path(name).to_string_lossy().into_owned()
}

#[test]
fn validate_and_gains_succeed_on_shipped_configs() {
    for name in ["ideal_step.toml", "contact_3dof.toml", "zwidth_3dof.toml", "chain_7dof.toml"] {
        let out = vdc_sim(&["validate", &shipped(name)]);
        assert_eq!(code(&out), 0, "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = vdc_sim(&["gains", &shipped("ideal_step.toml")]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let residuals = report["identity_residuals"].as_array().unwrap();
    assert!(residuals.iter().all(|r| r.as_f64().unwrap() < 1e-10));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(code(&vdc_sim(&["validate", missing.to_str().unwrap()])), 1);

    let text = std::fs::read_to_string(config_path("ideal_step.toml")).unwrap();
    let bad_dt = write(dir.path(), "bad.toml", &text.replace("dt = 0.001", "dt = -0.001"));
    assert_eq!(code(&vdc_sim(&["validate", &bad_dt])), 1);
    assert_eq!(code(&vdc_sim(&["simulate", &bad_dt])), 1);

    let unknown = write(dir.path(), "unknown.toml", &text.replace("[run]", "[run]\nspeed = 3"));
    assert_eq!(code(&vdc_sim(&["validate", &unknown])), 1);

    // A sweep needs its own section.
    assert_eq!(code(&vdc_sim(&["zwidth", &shipped("ideal_step.toml")])), 1);
}

#[test]
fn divergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config_path("free_3dof.toml")).unwrap();
    let cfg = write(dir.path(), "fast.toml", &text.replace("[run]", "[run]\nvelocity_limit = 1e-3"));
    let out_dir = dir.path().join("out");
    let out = vdc_sim(&["simulate", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    // The partial run is still written.
    assert!(out_dir.join("summary.json").exists());
}

#[test]
fn failed_checks_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config_path("contact_3dof.toml")).unwrap();
    let strict = text.replace("max_upsilon_after_transient = 1e-2", "max_upsilon_after_transient = 1e-9");
    let cfg = write(dir.path(), "strict.toml", &strict);
    let out = vdc_sim(&["simulate", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = vdc_sim(&["simulate", &shipped("contact_3dof.toml"), "--out", d.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["telemetry.csv", "summary.json"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert!(!x.is_empty());
        assert!(x == y, "{f} differs");
    }
    let csv = std::fs::read_to_string(a.join("telemetry.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5001);
}

#[test]
fn zwidth_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config_path("zwidth_3dof.toml")).unwrap();
    let start = text.find("[zwidth]").unwrap();
    let end = text[start..].find("\n[").map_or(text.len(), |i| start + i + 1);
    let small = format!(
        "{}[zwidth]\ninertia_grid = [1.0, 2.0]\nstiffness_min = 500.0\nstiffness_max = 800.0\n{}",
        &text[..start],
        &text[end..]
    );
    let cfg = write(dir.path(), "small.toml", &small);
    let out_dir = dir.path().join("sweep");
    let out = vdc_sim(&["zwidth", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(report["points"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
