use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn leo_isac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leo-isac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn lists_every_preset() {
    let out = leo_isac(&["list-presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "ee-vs-power",
        "beampattern-fc",
        "beampattern-pc",
        "ee-vs-antennas",
        "ee-vs-bandwidth",
        "squint-cut",
        "pd-vs-power",
        "convergence",
    ] {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn validate_accepts_overlay_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.toml", "seed = 5\n");
    let out = leo_isac(&["validate", "--config", &good, "--scenario", "convergence"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let bad = write(dir.path(), "bad.toml", "seeed = 5\n");
    let out = leo_isac(&["validate", "--config", &bad, "--scenario", "convergence"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seeed"));
}

#[test]
fn incomplete_standalone_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let partial = write(
        dir.path(),
        "partial.toml",
        "schema_version = 1\nname = \"x\"\n",
    );
    let out = leo_isac(&["run", "--config", &partial]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing field"));
}

#[test]
fn invalid_dimensions_report_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "n_rf_chains = 2\n");
    let out = leo_isac(&["run", "--config", &cfg, "--scenario", "convergence"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_rf_chains"));
}

#[test]
fn unknown_preset_is_a_config_error() {
    let out = leo_isac(&["run", "--scenario", "does-not-exist"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_results_and_flags_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write(
        dir.path(),
        "c.toml",
        "structures = [\"fully-digital\"]\nmc_trials = 10\n",
    );
    let out = leo_isac(&[
        "run",
        "--config",
        &cfg,
        "--scenario",
        "convergence",
        "--seed",
        "11",
        "--out",
        out_dir.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("records.json").exists());
    let manifest = fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"master_seed\": 11"));

    let capped = write(
        dir.path(),
        "capped.toml",
        "structures = [\"fully-connected\"]\nzeta = [0.5]\nhybrid_max_iters = 1\nmc_trials = 10\n",
    );
    let out = leo_isac(&[
        "run",
        "--config",
        &capped,
        "--scenario",
        "convergence",
        "--out",
        dir.path().join("capped").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("capped/records.csv").exists());
}
