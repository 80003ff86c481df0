use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{OutputFormat, ScenarioConfig};
use super::run::RunReport;
use super::HarnessError;

#[derive(Serialize)]
struct PointSeed {
    point_index: usize,
    seed: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    name: &'a str,
    config_hash: &'a str,
    master_seed: u64,
    points: usize,
    non_converged_points: usize,
    point_seeds: Vec<PointSeed>,
    files: Vec<String>,
    config: &'a ScenarioConfig,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Output(format!("{}: {e}", path.display()))
}

fn write_rows<T: Serialize>(
    dir: &Path,
    stem: &str,
    rows: &[T],
    format: OutputFormat,
) -> Result<PathBuf, HarnessError> {
    match format {
        OutputFormat::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
            for row in rows {
                w.serialize(row).map_err(|e| io_err(&path, e))?;
            }
            w.flush().map_err(|e| io_err(&path, e))?;
            Ok(path)
        }
        OutputFormat::Json => {
            let path = dir.join(format!("{stem}.json"));
            let text = serde_json::to_string_pretty(rows).map_err(|e| io_err(&path, e))?;
            fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
            Ok(path)
        }
    }
}

/// Writes records, traces, optional beampattern files and `manifest.json`
/// into `report.config.output_dir`. Returns the written paths, manifest last.
pub fn write_report(report: &RunReport) -> Result<Vec<PathBuf>, HarnessError> {
    let config = &report.config;
    let dir = Path::new(&config.output_dir);
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let format = config.format;

    let mut files = vec![
        write_rows(dir, "records", &report.records, format)?,
        write_rows(dir, "traces_digital", &report.digital_traces, format)?,
        write_rows(dir, "traces_hybrid", &report.hybrid_traces, format)?,
    ];
    for (point, rows) in &report.beampatterns {
        files.push(write_rows(
            dir,
            &format!("beampattern_{point}"),
            rows,
            format,
        )?);
    }
    for (point, rows) in &report.cuts {
        files.push(write_rows(
            dir,
            &format!("squint_cut_{point}"),
            rows,
            format,
        )?);
    }
    if !report.peaks.is_empty() {
        files.push(write_rows(dir, "squint_peaks", &report.peaks, format)?);
    }

    let manifest = Manifest {
        schema_version: config.schema_version,
        name: &config.name,
        config_hash: &report.config_hash,
        master_seed: config.seed,
        points: report.records.len(),
        non_converged_points: report.non_converged(),
        point_seeds: report
            .records
            .iter()
            .map(|r| PointSeed {
                point_index: r.point_index,
                seed: r.seed,
            })
            .collect(),
        files: files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
        config,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| io_err(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
    files.push(path);
    Ok(files)
}

/// Reads the resolved configuration back out of a manifest.
pub fn read_manifest_config(path: &Path) -> Result<ScenarioConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
    let config = value
        .get("config")
        .cloned()
        .ok_or_else(|| HarnessError::Output(format!("{}: no `config` entry", path.display())))?;
    serde_json::from_value(config).map_err(|e| io_err(path, e))
}
