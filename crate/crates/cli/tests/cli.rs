use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_measure-toc"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const COARSE: &str = "[numerics]\ndt = 0.01\nparticles = 20\n";

#[test]
fn example_verify_passes() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), COARSE, &["example-verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = fs::read_to_string(dir.path().join("out/example_verify.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("check,numeric,analytic,error,tolerance,pass"));
    assert!(!csv.contains(",false"));
}

#[test]
fn value_at_mean_one() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), COARSE, &["value"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("best control: constant -1"), "{out}");
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/value.json")).unwrap()).unwrap();
    let v = json["upper_bound"].as_f64().unwrap();
    assert!((v - 2f64.ln()).abs() < 2e-2, "{v}");
    assert_eq!(json["replay_reproduced"], true);
    assert_eq!(json["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn zero_field_is_censored() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("[problem]\ndynamics = \"zero\"\n{COARSE}");
    let o = run(dir.path(), &cfg, &["simulate"]);
    assert_eq!(o.status.code(), Some(0));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/hitting.json")).unwrap()).unwrap();
    assert_eq!(json["hitting"]["status"], "censored");
}

#[test]
fn unknown_key_is_config_error() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), "[numerics]\nbogus = 1\n", &["value"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_seed_for_shooting_is_config_error() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), "[search]\nstrategy = \"shooting\"\n", &["value"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn blow_up_exit_code() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("[problem]\ndynamics = \"affine\"\nself_coeff = 800.0\n{COARSE}");
    let o = run(dir.path(), &cfg, &["simulate"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn failed_check_exit_code() {
    let dir = TempDir::new().unwrap();
    let cfg = "[numerics]\ndt = 0.01\nparticles = 20\nvalue_tolerance = 1e-12\n[gamma]\nn_list = [5, 10]\n";
    let o = run(dir.path(), cfg, &["gamma"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(dir.path().join("out/gamma.csv").exists());
}

#[test]
fn hjb_check_passes() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), COARSE, &["hjb-check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = fs::read_to_string(dir.path().join("out/hjb_sweep.csv")).unwrap();
    assert!(csv.starts_with("# measure-toc "));
}

#[test]
fn shooting_runs_are_reproducible() {
    let cfg = "[numerics]\ndt = 0.01\nparticles = 20\n[search]\nstrategy = \"shooting\"\nsamples = 8\nseed = 11\n";
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(run(a.path(), cfg, &["value"]).status.code(), Some(0));
    assert_eq!(run(b.path(), cfg, &["value"]).status.code(), Some(0));
    for name in ["candidates.csv", "value.json", "best_control.txt"] {
        let x = fs::read(a.path().join("out").join(name)).unwrap();
        let y = fs::read(b.path().join("out").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn seed_flag_changes_hash() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    run(a.path(), COARSE, &["--seed", "1", "simulate"]);
    run(b.path(), COARSE, &["--seed", "2", "simulate"]);
    let head =
        |d: &TempDir| fs::read_to_string(d.path().join("out/mean.csv")).unwrap().lines().next().unwrap().to_string();
    assert_ne!(head(&a), head(&b));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["mean_drift.toml", "planar_ball.toml"] {
        let text = fs::read_to_string(root.join(name)).unwrap();
        let dir = TempDir::new().unwrap();
        let patched = text.replace("dt = 1e-3", "dt = 1e-2");
        let o = run(dir.path(), &patched, &["simulate"]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}
