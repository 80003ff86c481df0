use std::fs;

use leo_isac::harness::{
    execute, preset, read_manifest_config, run_scenario, Architecture, OutputFormat, ScenarioConfig,
};

fn small(name: &str) -> ScenarioConfig {
    preset(name)
        .unwrap()
        .overlay_toml_str("mc_trials = 20\nhybrid_max_iters = 20")
        .unwrap()
}

#[test]
fn records_carry_hash_and_point_seed() {
    let mut config = small("convergence");
    config.power_dbw = vec![0.0];
    let report = execute(&config).unwrap();
    let hash = config.hash();
    assert_eq!(report.records.len(), 5);
    for r in &report.records {
        assert_eq!(r.config_hash, hash);
        assert_ne!(r.seed, config.seed);
    }
    let seeds: std::collections::HashSet<u64> = report.records.iter().map(|r| r.seed).collect();
    assert_eq!(seeds.len(), report.records.len());
}

#[test]
fn adding_sweep_points_leaves_existing_points_unchanged() {
    let mut config = small("ee-vs-power");
    config.power_dbw = vec![0.0, 10.0];
    config.structures = vec![Architecture::FullyConnected];
    let before = execute(&config).unwrap();
    config.power_dbw = vec![-5.0, 0.0, 5.0, 10.0];
    let after = execute(&config).unwrap();
    for old in &before.records {
        let new = after
            .records
            .iter()
            .find(|r| r.power_dbw == old.power_dbw && r.zeta == old.zeta)
            .unwrap();
        assert_eq!(new.seed, old.seed);
        assert_eq!(new.ee_bound_bits_per_joule, old.ee_bound_bits_per_joule);
        assert_eq!(new.ee_mc_bits_per_joule, old.ee_mc_bits_per_joule);
    }
}

#[test]
fn manifest_round_trips_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small("squint-cut");
    config.grid_points = 101;
    config.output_dir = dir.path().join("out").to_string_lossy().into_owned();
    let report = run_scenario(&config).unwrap();
    let manifest = dir.path().join("out/manifest.json");
    assert_eq!(report.files.last().unwrap(), &manifest);
    assert_eq!(read_manifest_config(&manifest).unwrap(), config);
    for name in [
        "records.csv",
        "traces_digital.csv",
        "traces_hybrid.csv",
        "squint_cut_0.csv",
        "squint_peaks.csv",
    ] {
        assert!(dir.path().join("out").join(name).exists(), "{name}");
    }
}

#[test]
fn csv_header_starts_with_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small("convergence");
    config.structures = vec![Architecture::FullyDigital];
    config.output_dir = dir.path().to_string_lossy().into_owned();
    run_scenario(&config).unwrap();
    let text = fs::read_to_string(dir.path().join("records.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with(
        "power_dbw,ee_bound_bits_per_joule,ee_mc_bits_per_joule,ee_mc_stderr,sum_rate_bits,tx_power_w,iters_outer"
    ));
}

#[test]
fn lattice_beampattern_is_relative_to_grid_maximum() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small("beampattern-pc");
    config.grid_points = 21;
    config.output_dir = dir.path().to_string_lossy().into_owned();
    run_scenario(&config).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("beampattern_0.csv")).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["theta_x", "theta_y", "subcarrier_index", "gain_db"]
    );
    let gains: Vec<f64> = reader
        .records()
        .map(|r| r.unwrap()[3].parse::<f64>().unwrap())
        .collect();
    assert_eq!(gains.len(), 21 * 21 * config.n_subcarriers);
    assert_eq!(gains.iter().copied().fold(f64::NEG_INFINITY, f64::max), 0.0);
}

#[test]
fn json_output_matches_csv_content() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small("convergence");
    config.structures = vec![Architecture::FullyDigital];
    config.format = OutputFormat::Json;
    config.output_dir = dir.path().to_string_lossy().into_owned();
    let report = run_scenario(&config).unwrap();
    let text = fs::read_to_string(dir.path().join("records.json")).unwrap();
    let parsed: Vec<leo_isac::harness::PointRecord> = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, report.records);
}

#[test]
fn identical_seed_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut config = small("ee-vs-power");
    config.power_dbw = vec![0.0, 20.0];
    for dir in [&a, &b] {
        config.output_dir = dir.path().join("run").to_string_lossy().into_owned();
        run_scenario(&config).unwrap();
    }
    for name in ["records.csv", "traces_digital.csv", "traces_hybrid.csv"] {
        let x = fs::read(a.path().join("run").join(name)).unwrap();
        let y = fs::read(b.path().join("run").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}
