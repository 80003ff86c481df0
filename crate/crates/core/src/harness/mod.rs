//! Scenario configuration, built-in presets, sweep execution and result
//! files.
//!
//! A run expands the configured lists (arrays, bandwidths, powers, weights,
//! architectures, squint models) into sweep points. Every point draws its
//! random numbers from a seed derived from the master seed and the point's own
//! parameters, so adding or removing points never changes the others.

mod config;
mod output;
mod presets;
mod run;

use thiserror::Error;

use crate::channel::SubcarrierPlan;
use crate::{IsacError, BOLTZMANN};

pub use config::{
    Architecture, BeampatternOutput, OutputFormat, ScenarioConfig, SensingScaling, UtAngleSource,
    SCHEMA_VERSION,
};
pub use output::{read_manifest_config, write_report};
pub use presets::{preset, PRESETS};
pub use run::{
    execute, run_scenario, CutPeak, DigitalTraceRow, HybridTraceRow, PointRecord, RunReport,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config field `{field}`: {reason}")]
    Field { field: String, reason: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("cannot read config {path}: {reason}")]
    Io { path: String, reason: String },
}

impl ConfigError {
    pub fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Field {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver failure at point {point}: {source}")]
    Solver { point: usize, source: IsacError },
    #[error("output error: {0}")]
    Output(String),
}

/// Thermal noise `k_B Δ_B T_n` with the standard Boltzmann constant.
pub fn noise_power(plan: &SubcarrierPlan, t_n: f64) -> f64 {
    thermal_noise(BOLTZMANN, plan, t_n)
}

pub fn thermal_noise(k_b: f64, plan: &SubcarrierPlan, t_n: f64) -> f64 {
    k_b * plan.spacing_hz() * t_n
}

pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `words` into the master seed one splitmix64 round at a time.
pub fn derive_seed(master: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(splitmix64(master), |acc, &w| splitmix64(acc ^ w))
}

/// Stable 64-bit tag for a short label.
pub fn label_word(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01B3)
    })
}
