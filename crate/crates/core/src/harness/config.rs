use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ConfigError;
use crate::channel::SquintModel;
use crate::hybrid_precoder::HybridInit;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    FullyDigital,
    FullyConnected,
    PartiallyConnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtAngleSource {
    Uniform,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensingScaling {
    /// `‖B_ss[m]‖_F = ‖B_com[m]‖_F` on every subcarrier.
    PowerMatched,
    /// Unit Frobenius norm per subcarrier.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeampatternOutput {
    None,
    /// Full `grid_points x grid_points` lattice per subcarrier.
    Lattice,
    /// Horizontal and vertical cuts through the first target.
    Cuts,
}

/// Flat scenario description. Every list is a sweep axis; the run covers
/// their Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,

    /// `[n_x, n_y]` planar arrays.
    pub arrays: Vec<[usize; 2]>,
    pub element_spacing_wavelengths: f64,
    pub carrier_hz: f64,
    pub bandwidths_hz: Vec<f64>,
    pub n_subcarriers: usize,

    pub n_users: usize,
    pub n_rf_chains: usize,
    pub power_dbw: Vec<f64>,
    pub zeta: Vec<f64>,
    pub structures: Vec<Architecture>,
    pub squint_models: Vec<SquintModel>,

    pub inv_amp_eff: f64,
    pub p_rfc_w: f64,
    pub p_lo_w: f64,
    pub p_bb_w: f64,
    pub p_al_w: f64,

    pub noise_temperature_k: f64,
    pub boltzmann: f64,
    pub altitude_m: f64,
    pub gain_sat_db: f64,
    pub gain_ut_db: f64,
    pub rician_db: f64,

    pub ut_angle_source: UtAngleSource,
    /// `[θx, θy]` per UT; used when `ut_angle_source = "explicit"`.
    #[serde(default)]
    pub ut_angles: Vec<[f64; 2]>,
    pub target_angles: Vec<[f64; 2]>,
    pub reflectivity: f64,
    pub p_fa: f64,
    pub sensing_scaling: SensingScaling,

    pub dinkelbach_tol: f64,
    pub inner_tol: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    pub bisection_tol: f64,
    pub hybrid_tol: f64,
    pub hybrid_max_iters: usize,
    #[serde(default)]
    pub hybrid_init: HybridInit,
    pub verify_structure: bool,

    pub mc_trials: usize,
    pub seed: u64,
    pub output_dir: String,
    pub format: OutputFormat,
    pub beampattern: BeampatternOutput,
    pub grid_points: usize,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&read(path)?)
    }

    /// Applies the keys of a (possibly partial) TOML document on top of `self`.
    pub fn overlay_toml_str(&self, text: &str) -> Result<Self, ConfigError> {
        let patch: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut base =
            toml::Table::try_from(self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for (key, value) in patch {
            base.insert(key, value);
        }
        let config: ScenarioConfig = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn overlay_file(&self, path: &Path) -> Result<Self, ConfigError> {
        self.overlay_toml_str(&read(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// SHA-256 of the canonical JSON encoding with `output_dir` blanked, hex.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir.clear();
        let json = serde_json::to_vec(&canonical).expect("config serialises");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn n_targets(&self) -> usize {
        self.target_angles.len()
    }

    /// Full-size dimensions: 48x48 array, 40 subcarriers, 16 UTs and RF chains.
    /// Array sweeps are rescaled to the 20x20..48x48 range.
    pub fn full_scale(mut self) -> Self {
        self.arrays = if self.arrays.len() > 1 {
            vec![[20, 20], [24, 24], [32, 32], [40, 40], [48, 48]]
        } else {
            vec![[48, 48]]
        };
        self.n_subcarriers = 40;
        self.n_users = 16;
        self.n_rf_chains = 16;
        if self.ut_angle_source == UtAngleSource::Explicit && self.ut_angles.len() != self.n_users {
            self.ut_angle_source = UtAngleSource::Uniform;
            self.ut_angles.clear();
        }
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::field(
                "schema_version",
                format!(
                    "{} is not supported (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        for (field, empty) in [
            ("arrays", self.arrays.is_empty()),
            ("bandwidths_hz", self.bandwidths_hz.is_empty()),
            ("power_dbw", self.power_dbw.is_empty()),
            ("zeta", self.zeta.is_empty()),
            ("structures", self.structures.is_empty()),
            ("squint_models", self.squint_models.is_empty()),
            ("target_angles", self.target_angles.is_empty()),
        ] {
            if empty {
                return Err(ConfigError::field(field, "must not be empty"));
            }
        }
        positive(
            "element_spacing_wavelengths",
            self.element_spacing_wavelengths,
        )?;
        positive("carrier_hz", self.carrier_hz)?;
        for &b in &self.bandwidths_hz {
            positive("bandwidths_hz", b)?;
        }
        if self.n_subcarriers == 0 {
            return Err(ConfigError::field("n_subcarriers", "must be >= 1"));
        }
        if self.n_users == 0 {
            return Err(ConfigError::field("n_users", "must be >= 1"));
        }
        for &p in &self.power_dbw {
            if !p.is_finite() {
                return Err(ConfigError::field(
                    "power_dbw",
                    format!("{p} is not finite"),
                ));
            }
        }
        for &z in &self.zeta {
            if !(0.0..=1.0).contains(&z) {
                return Err(ConfigError::field("zeta", format!("{z} outside [0, 1]")));
            }
        }
        positive("inv_amp_eff", self.inv_amp_eff)?;
        for (field, v) in [
            ("p_rfc_w", self.p_rfc_w),
            ("p_lo_w", self.p_lo_w),
            ("p_bb_w", self.p_bb_w),
            ("p_al_w", self.p_al_w),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::field(
                    field,
                    format!("{v} must be finite and >= 0"),
                ));
            }
        }
        positive("noise_temperature_k", self.noise_temperature_k)?;
        positive("boltzmann", self.boltzmann)?;
        positive("altitude_m", self.altitude_m)?;
        for (field, v) in [
            ("gain_sat_db", self.gain_sat_db),
            ("gain_ut_db", self.gain_ut_db),
            ("rician_db", self.rician_db),
        ] {
            if !v.is_finite() {
                return Err(ConfigError::field(field, format!("{v} is not finite")));
            }
        }
        if self.ut_angle_source == UtAngleSource::Explicit && self.ut_angles.len() != self.n_users {
            return Err(ConfigError::field(
                "ut_angles",
                format!(
                    "{} entries for {} users",
                    self.ut_angles.len(),
                    self.n_users
                ),
            ));
        }
        for (field, list) in [
            ("ut_angles", &self.ut_angles),
            ("target_angles", &self.target_angles),
        ] {
            for pair in list {
                if pair.iter().any(|a| !(-1.0..=1.0).contains(a)) {
                    return Err(ConfigError::field(
                        field,
                        format!("{pair:?} outside [-1, 1]"),
                    ));
                }
            }
        }
        positive("reflectivity", self.reflectivity)?;
        if !(self.p_fa > 0.0 && self.p_fa < 1.0) {
            return Err(ConfigError::field(
                "p_fa",
                format!("{} outside (0, 1)", self.p_fa),
            ));
        }
        for (field, v) in [
            ("dinkelbach_tol", self.dinkelbach_tol),
            ("inner_tol", self.inner_tol),
            ("bisection_tol", self.bisection_tol),
            ("hybrid_tol", self.hybrid_tol),
        ] {
            positive(field, v)?;
        }
        for (field, v) in [
            ("max_outer_iters", self.max_outer_iters),
            ("max_inner_iters", self.max_inner_iters),
            ("hybrid_max_iters", self.hybrid_max_iters),
            ("mc_trials", self.mc_trials),
        ] {
            if v == 0 {
                return Err(ConfigError::field(field, "must be >= 1"));
            }
        }
        if self.grid_points < 2 {
            return Err(ConfigError::field("grid_points", "must be >= 2"));
        }
        if self.output_dir.is_empty() {
            return Err(ConfigError::field("output_dir", "must not be empty"));
        }

        let k = self.n_users;
        let m_t = self.n_rf_chains;
        let p_r = self.n_targets();
        if p_r > k {
            return Err(ConfigError::field(
                "target_angles",
                format!("P_r = {p_r} exceeds K = {k}"),
            ));
        }
        if m_t < k {
            return Err(ConfigError::field(
                "n_rf_chains",
                format!("M_t = {m_t} is below K = {k}"),
            ));
        }
        for &[n_x, n_y] in &self.arrays {
            let n = n_x * n_y;
            if n == 0 {
                return Err(ConfigError::field(
                    "arrays",
                    format!("[{n_x}, {n_y}] has no elements"),
                ));
            }
            if m_t > n {
                return Err(ConfigError::field(
                    "n_rf_chains",
                    format!("M_t = {m_t} exceeds N_t = {n}"),
                ));
            }
            if n % p_r != 0 {
                return Err(ConfigError::field(
                    "arrays",
                    format!("N_t = {n} is not divisible by P_r = {p_r}"),
                ));
            }
            if self.structures.contains(&Architecture::PartiallyConnected) && n % m_t != 0 {
                return Err(ConfigError::field(
                    "arrays",
                    format!("N_t = {n} is not divisible by M_t = {m_t} (partially connected)"),
                ));
            }
        }
        Ok(())
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::field(
            field,
            format!("{v} must be finite and > 0"),
        ))
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
