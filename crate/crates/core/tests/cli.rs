use std::path::Path;
use std::process::{Command, Output};

fn zrp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zrp")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn ensemble_table_succeeds_and_lists_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "table_phi = [0.5, 1.0]\n");
    let out = dir.path().join("out");
    let run = zrp(&["ensemble-table", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let listed = String::from_utf8(run.stdout).unwrap();
    assert!(listed.contains("ensemble_table.csv"));
    assert!(out.join("ensemble_table.csv").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn overrides_apply_before_validation() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "n = 8\nm = 8\nt_checkpoints = [0.001]\ndiagnostic_samples = 0\n");
    let out = dir.path().join("out");
    let run = zrp(&["simulate", "--config", &config, "--replicas", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    let run = zrp(&["simulate", "--config", &config, "--seed", "7", "--replicas", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"base_seed\": 7"), "{manifest}");
}

#[test]
fn bad_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "n = 8\nreplicas = \"many\"\n");
    let run = zrp(&["compare", "--config", &config]);
    assert_eq!(run.status.code(), Some(2));
    let message = String::from_utf8_lossy(&run.stderr);
    assert!(message.contains("line 2") && message.contains("replicas"), "{message}");
}

#[test]
fn supercritical_pde_exits_with_numerical_code() {
    // constant rate 3 holds at most a finite density, and 4 is above it
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "m = 16\nt_checkpoints = [0.001]\n\n[rate]\nkind = \"constant\"\nlevel = 3.0\n\n[initial]\nkind = \"uniform\"\nvalue = 4\n",
    );
    let out = dir.path().join("out");
    let run = zrp(&["pde", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(3), "{}", String::from_utf8_lossy(&run.stderr));
}
