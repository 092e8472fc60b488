use std::path::Path;
use std::process::{Command, Output};

fn walkerlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_walkerlab")).args(args).output().expect("binary runs")
}

fn header_json(line: &str) -> serde_json::Value {
    serde_json::from_str(line.strip_prefix("# ").expect("header marker")).expect("header is json")
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(walkerlab(&["bogus"]).status.code(), Some(2));
    assert_eq!(walkerlab(&["linear", "bode", "--points", "many"]).status.code(), Some(2));
}

#[test]
fn help_exits_cleanly() {
    let out = walkerlab(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["simulate", "limit-cycle", "traces", "mfpt", "mfpt-curve", "linear", "sweep", "validate"] {
        assert!(text.contains(sub), "help lists {sub}");
    }
}

#[test]
fn impulse_csv_layout_and_rerun_identity() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("impulse.csv");
    let run = || {
        let out = walkerlab(&[
            "--out",
            path.to_str().unwrap(),
            "linear",
            "impulse",
            "--duration",
            "0.05",
            "--dt",
            "1e-3",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read_to_string(&path).unwrap()
    };
    let first = run();
    assert_eq!(first, run());

    let mut lines = first.lines();
    let header = header_json(lines.next().unwrap());
    assert_eq!(header["tool"], "walkerlab");
    assert_eq!(header["command"], "linear impulse");
    assert_eq!(header["config"]["command"]["v_pre"], 1.2);
    assert_eq!(lines.next().unwrap(), "t,power_model_a,power_model_b");
    let rows: Vec<Vec<f64>> =
        lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 51);
    assert_eq!(rows[0][0], 0.0);
    // Slowing the cart draws energy out of the upper body at first.
    assert!(rows[0][1] < 0.0 && rows[0][2] < 0.0);
}

#[test]
fn bode_json_document() {
    let out = walkerlab(&["--format", "json", "linear", "bode", "--output", "force", "--points", "5"]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["header"]["command"], "linear bode");
    let data = doc["data"].as_array().unwrap();
    assert_eq!(data.len(), 2);
    assert_eq!(data[0].as_array().unwrap().len(), 5);
}

#[test]
fn bad_bode_grid_is_domain_error() {
    let out = walkerlab(&["linear", "bode", "--omega-min", "10", "--omega-max", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error["));
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn config_overrides_reach_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "walker.toml", "hip_p = 20\nhead_mass = 4.5\n");
    let out = walkerlab(&["--config", &cfg, "--seed", "7", "linear", "impulse", "--duration", "0.01", "--dt", "1e-3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let header = header_json(text.lines().next().unwrap());
    assert_eq!(header["seed"], 7);
    assert_eq!(header["config"]["walker"]["gains"]["hip_p"], 20.0);
    assert_eq!(header["config"]["walker"]["body"]["head_mass"], 4.5);
}

#[test]
fn unknown_config_key_is_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "walker.toml", "hip_q = 20\n");
    let out = walkerlab(&["--config", &cfg, "validate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hip_q"));
}

#[test]
fn simulate_writes_trajectory_rows() {
    let out = walkerlab(&["simulate", "--model", "a", "--steps", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines().skip(1);
    let columns = lines.next().unwrap();
    assert!(columns.starts_with("t,theta,") && columns.ends_with(",energy,power,phase"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 16);
}

#[test]
fn negative_sigma_is_rejected() {
    let out = walkerlab(&["simulate", "--sigma=-0.1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validate_passes_at_baseline() {
    let out = walkerlab(&["validate"]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(0), "{err}");
    assert!(!err.contains("FAIL"));
}
