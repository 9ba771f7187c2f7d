//! End-to-end checks of the command-line interface and its exit-code
//! contract: 0 success, 1 analysis gate failed, 2 input error.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_swarm-init")
}

fn small_config(n: &str, dt_field: &str, mc: Option<&str>) -> String {
    let mc_block = mc
        .map(|body| format!(",\n  \"mc\": {body}"))
        .unwrap_or_default();
    format!(
        r#"{{
  "orbit": {{
    "mu": 3.99e14, "R_e": 6.37e6, "h": 4.0e5, "i0": 51.7,
    "rho": 1.18e-12, "C_d": 2.0, "A_over_m": 0.01,
    "m": 1.0, "ell": 0.1, "d_off": 0.01
  }},
  "consensus": {{ "k_A": 10.0 }},
  "safety": {{ "r_c": 1.0, "beta": 0.01 }},
  "deployment": {{
    "N": {n}, {dt_field}, "policy": "drift_matched",
    "xdot": 0.001, "ydot": 0.001, "dt_ref": 4.0
  }},
  "drag": {{ "M_trunc": 5 }}{mc_block}
}}"#
    )
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn CLI")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn validate_echoes_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ok.json",
        &small_config("3", "\"dt\": 4.0", None),
    );
    let out = run(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for key in [
        "s_J2",
        "omega_xy",
        "epsilon_2",
        "k_0",
        "nu",
        "C1_air",
        "C4_air",
    ] {
        assert!(text.contains(key), "missing {key} in echo:\n{text}");
    }
}

#[test]
fn validate_rejects_negative_mass_naming_key() {
    let dir = tempfile::tempdir().unwrap();
    let body = small_config("3", "\"dt\": 4.0", None).replace("\"m\": 1.0", "\"m\": -1.0");
    let cfg = write_config(dir.path(), "bad.json", &body);
    let out = run(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("`m`"), "stderr should name the key: {text}");
}

#[test]
fn validate_rejects_missing_safety_block() {
    let dir = tempfile::tempdir().unwrap();
    let body = small_config("3", "\"dt\": 4.0", None)
        .replace("\"safety\": { \"r_c\": 1.0, \"beta\": 0.01 },", "");
    let cfg = write_config(dir.path(), "nosafety.json", &body);
    let out = run(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_rejects_empty_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "empty.json",
        &small_config("3", "\"dt_grid\": []", None),
    );
    let out = run(&[
        "sweep",
        &cfg,
        "--out",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt_grid"));
}

#[test]
fn sweep_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sweep.json",
        &small_config("[2, 3]", "\"dt_grid\": [2.0, 4.0]", None),
    );
    let out1 = dir.path().join("a.csv");
    let out2 = dir.path().join("b.csv");
    assert_eq!(
        run(&["sweep", &cfg, "--out", out1.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        run(&["sweep", &cfg, "--out", out2.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let a = fs::read(&out1).unwrap();
    let b = fs::read(&out2).unwrap();
    assert_eq!(a, b, "sweep output must be byte-identical across runs");
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# config: {"));
    assert!(text.contains(
        "dt_s,N,allowable_factor,worst_stage,mean_budget_Akmu_m,mean_budget_Bkmu_m,diagnostic"
    ));
    // One row per (dt, N) pair.
    assert_eq!(text.lines().count(), 2 + 4);
}

#[test]
fn montecarlo_writes_outputs_and_gates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mc.json",
        &small_config(
            "3",
            "\"dt\": 4.0",
            Some(r#"{ "n_trials": 50, "seed": 11, "variance_factor": 0.02, "worst_q": 10 }"#),
        ),
    );
    let out_dir = dir.path().join("mc");
    let out = run(&["montecarlo", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for name in ["summary.json", "trace.csv", "topology.json"] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let summary = fs::read_to_string(out_dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"failures\""));
    assert!(summary.contains("\"config\""));

    // Seed repeat: byte-identical files.
    let out_dir2 = dir.path().join("mc2");
    run(&["montecarlo", &cfg, "--out", out_dir2.to_str().unwrap()]);
    for name in ["summary.json", "trace.csv", "topology.json"] {
        assert_eq!(
            fs::read(out_dir.join(name)).unwrap(),
            fs::read(out_dir2.join(name)).unwrap(),
            "{name} must be reproducible"
        );
    }
}

#[test]
fn montecarlo_infeasible_config_exits_one() {
    // A huge dispersion with a near-zero risk budget must trip the gate.
    let dir = tempfile::tempdir().unwrap();
    let body = small_config(
        "3",
        "\"dt\": 4.0",
        Some(r#"{ "n_trials": 60, "seed": 3, "variance_factor": 0.9, "worst_q": 10 }"#),
    )
    .replace("\"beta\": 0.01", "\"beta\": 1e-9");
    let cfg = write_config(dir.path(), "hot.json", &body);
    let out_dir = dir.path().join("mc");
    let out = run(&["montecarlo", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "gate must fail");
}

#[test]
fn montecarlo_requires_mc_block() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "nomc.json",
        &small_config("3", "\"dt\": 4.0", None),
    );
    let out = run(&[
        "montecarlo",
        &cfg,
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mc"));
}

#[test]
fn unreadable_config_exits_two() {
    let out = run(&["validate", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
}
