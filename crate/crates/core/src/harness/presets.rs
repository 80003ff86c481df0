use super::config::{
    Architecture, BeampatternOutput, OutputFormat, ScenarioConfig, SensingScaling, UtAngleSource,
    SCHEMA_VERSION,
};
use super::ConfigError;
use crate::channel::SquintModel;
use crate::hybrid_precoder::HybridInit;
use crate::BOLTZMANN;

/// Preset names with one-line descriptions.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "ee-vs-power",
        "energy efficiency against the power budget for each architecture",
    ),
    (
        "beampattern-fc",
        "2-D transmit beampattern of the fully connected hybrid precoder",
    ),
    (
        "beampattern-pc",
        "2-D transmit beampattern of the partially connected hybrid precoder",
    ),
    ("ee-vs-antennas", "energy efficiency against the array size"),
    (
        "ee-vs-bandwidth",
        "squint-aware and squint-unaware energy efficiency against bandwidth",
    ),
    (
        "squint-cut",
        "1-D beampattern cuts through one target, squint-aware against unaware",
    ),
    (
        "pd-vs-power",
        "detection probability of four targets against the power budget",
    ),
    (
        "convergence",
        "iteration traces of the digital and hybrid solvers",
    ),
];

const TABLE_TARGETS: [[f64; 2]; 4] = [[-0.3, 0.7], [0.6, -0.2], [-0.5, -0.9], [0.4, 0.8]];

fn sweep(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

/// Desk-scale defaults: 8x8 array, 8 subcarriers over 800 MHz, four UTs and
/// RF chains, two targets.
fn base(name: &str) -> ScenarioConfig {
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        arrays: vec![[8, 8]],
        element_spacing_wavelengths: 0.5,
        carrier_hz: 20e9,
        bandwidths_hz: vec![800e6],
        n_subcarriers: 8,
        n_users: 4,
        n_rf_chains: 4,
        power_dbw: vec![12.0],
        zeta: vec![0.5],
        structures: vec![Architecture::FullyConnected],
        squint_models: vec![SquintModel::Aware],
        inv_amp_eff: 2.0,
        p_rfc_w: 0.338,
        p_lo_w: 0.005,
        p_bb_w: 0.2,
        p_al_w: 0.0,
        noise_temperature_k: 300.0,
        boltzmann: BOLTZMANN,
        altitude_m: 1.0e6,
        gain_sat_db: 3.0,
        gain_ut_db: 3.0,
        rician_db: 12.0,
        ut_angle_source: UtAngleSource::Uniform,
        ut_angles: Vec::new(),
        target_angles: TABLE_TARGETS[..2].to_vec(),
        reflectivity: 3e-5,
        p_fa: 1e-7,
        sensing_scaling: SensingScaling::PowerMatched,
        dinkelbach_tol: 1e-4,
        inner_tol: 1e-6,
        max_outer_iters: 30,
        max_inner_iters: 200,
        bisection_tol: 1e-12,
        hybrid_tol: 1e-6,
        hybrid_max_iters: 200,
        hybrid_init: HybridInit::Subspace,
        verify_structure: false,
        mc_trials: 200,
        seed: 1,
        output_dir: format!("results/{name}"),
        format: OutputFormat::Csv,
        beampattern: BeampatternOutput::None,
        grid_points: 61,
    }
}

pub fn preset(name: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut c = base(name);
    match name {
        "ee-vs-power" => {
            c.power_dbw = sweep(-20.0, 30.0, 5.0);
            c.zeta = vec![0.4, 0.9];
            c.structures = vec![
                Architecture::FullyDigital,
                Architecture::FullyConnected,
                Architecture::PartiallyConnected,
            ];
        }
        "beampattern-fc" | "beampattern-pc" => {
            c.structures = vec![if name == "beampattern-fc" {
                Architecture::FullyConnected
            } else {
                Architecture::PartiallyConnected
            }];
            c.zeta = vec![0.2];
            c.beampattern = BeampatternOutput::Lattice;
            c.mc_trials = 50;
        }
        "ee-vs-antennas" => {
            c.arrays = vec![[4, 4], [6, 6], [8, 8], [10, 10], [12, 12]];
            c.structures = vec![
                Architecture::FullyDigital,
                Architecture::FullyConnected,
                Architecture::PartiallyConnected,
            ];
        }
        "ee-vs-bandwidth" => {
            c.arrays = vec![[16, 16]];
            c.bandwidths_hz = vec![100e6, 400e6, 800e6];
            c.structures = vec![Architecture::FullyDigital];
            c.zeta = vec![1.0];
            c.squint_models = vec![SquintModel::Aware, SquintModel::Unaware];
        }
        "squint-cut" => {
            c.arrays = vec![[16, 16]];
            c.target_angles = vec![TABLE_TARGETS[0]];
            c.zeta = vec![0.0];
            c.squint_models = vec![SquintModel::Aware, SquintModel::Unaware];
            c.beampattern = BeampatternOutput::Cuts;
            c.grid_points = 2001;
            c.mc_trials = 50;
        }
        "pd-vs-power" => {
            c.target_angles = TABLE_TARGETS.to_vec();
            c.power_dbw = sweep(-20.0, 30.0, 2.5);
            c.zeta = vec![0.0, 0.4, 0.9];
            c.squint_models = vec![SquintModel::Aware, SquintModel::Unaware];
            c.mc_trials = 50;
        }
        "convergence" => {
            c.zeta = vec![0.3, 0.7];
            c.structures = vec![
                Architecture::FullyDigital,
                Architecture::FullyConnected,
                Architecture::PartiallyConnected,
            ];
        }
        other => return Err(ConfigError::UnknownPreset(other.to_string())),
    }
    c.validate()?;
    Ok(c)
}
