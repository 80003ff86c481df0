use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{
    Architecture, BeampatternOutput, ScenarioConfig, SensingScaling, UtAngleSource,
};
use super::{derive_seed, label_word, output, thermal_noise, HarnessError};
use crate::channel::{
    db_to_linear, link_budget_power, subcarrier_frequencies, ArrayGeometry, ChannelStats,
    ResponseTable, SpaceAngle, SquintModel, SubcarrierPlan, UtStats,
};
use crate::comms_metrics::{
    ergodic_rate_mc, nats_to_bits, rate_upper_bound, total_power, DigitalPrecoderSet, PowerModel,
};
use crate::digital_precoder::{
    mrt_initialization, solve_fully_digital, DigitalSolution, SolveStatus, SolverOptions,
};
use crate::hybrid_precoder::{
    solve_hybrid, FactorizationTargets, HybridOptions, HybridPrecoder, Structure,
};
use crate::linalg::{CMatrix, Complex64};
use crate::sensing::detection::detection_probability;
use crate::sensing::{
    noncentrality_for_covariance, sensing_precoder_at, uniform_axis, BeampatternGrid, TargetSet,
};
use crate::SPEED_OF_LIGHT;

/// One evaluated sweep point. Rates are Jensen bounds unless marked `mc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub power_dbw: f64,
    pub ee_bound_bits_per_joule: f64,
    pub ee_mc_bits_per_joule: f64,
    pub ee_mc_stderr: f64,
    pub sum_rate_bits: f64,
    pub tx_power_w: f64,
    pub iters_outer: usize,
    pub point_index: usize,
    pub design_index: usize,
    pub n_elements: usize,
    pub bandwidth_hz: f64,
    pub structure: Architecture,
    pub zeta: f64,
    pub squint_model: SquintModel,
    /// Digital Dinkelbach ratio, nats/s/Hz/W.
    pub eta: f64,
    pub iters_inner: usize,
    pub iters_hybrid: usize,
    pub converged: bool,
    pub noncentrality: f64,
    pub p_detect: f64,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitalTraceRow {
    pub design_index: usize,
    pub iteration: usize,
    pub eta: f64,
    pub objective: f64,
    pub sum_rate: f64,
    pub transmit_power: f64,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridTraceRow {
    pub point_index: usize,
    pub subcarrier_index: usize,
    pub iteration: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeampatternRow {
    pub theta_x: f64,
    pub theta_y: f64,
    pub subcarrier_index: usize,
    pub gain_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutRow {
    pub cut: String,
    pub theta_x: f64,
    pub theta_y: f64,
    pub subcarrier_index: usize,
    pub gain_db: f64,
}

/// Beampattern peak on one cut through the first target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutPeak {
    pub point_index: usize,
    pub structure: Architecture,
    pub squint_model: SquintModel,
    pub cut: String,
    pub subcarrier_index: usize,
    pub peak: f64,
    pub target: f64,
    pub deviation_cells: f64,
}

/// Everything a run produces, before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub records: Vec<PointRecord>,
    pub digital_traces: Vec<DigitalTraceRow>,
    pub hybrid_traces: Vec<HybridTraceRow>,
    pub beampatterns: Vec<(usize, Vec<BeampatternRow>)>,
    pub cuts: Vec<(usize, Vec<CutRow>)>,
    pub peaks: Vec<CutPeak>,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    pub fn non_converged(&self) -> usize {
        self.records.iter().filter(|r| !r.converged).count()
    }
}

/// Runs the scenario and writes every result file under `config.output_dir`.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport, HarnessError> {
    let mut report = execute(config)?;
    report.files = output::write_report(&report)?;
    Ok(report)
}

/// Shared inputs of every point with the same array, bandwidth, power and
/// squint model.
struct Design {
    index: usize,
    geom: ArrayGeometry,
    plan: SubcarrierPlan,
    freqs: Vec<f64>,
    noise: f64,
    stats: ChannelStats,
    truth: ResponseTable,
    targets: TargetSet,
    sense: Vec<CMatrix>,
    digital: DigitalSolution,
}

/// Runs the scenario in memory.
pub fn execute(config: &ScenarioConfig) -> Result<RunReport, HarnessError> {
    config.validate()?;
    let hash = config.hash();
    let power_model = PowerModel {
        inv_amp_eff: config.inv_amp_eff,
        p_rfc: config.p_rfc_w,
        p_lo: config.p_lo_w,
        p_bb: config.p_bb_w,
        p_al: config.p_al_w,
        n_rf_chains: config.n_rf_chains,
    };
    let ut_angles = user_angles(config);
    let target_angles: Vec<SpaceAngle> = config
        .target_angles
        .iter()
        .map(|&[x, y]| SpaceAngle {
            theta_x: x,
            theta_y: y,
        })
        .collect();

    let mut report = RunReport {
        config: config.clone(),
        config_hash: hash.clone(),
        records: Vec::new(),
        digital_traces: Vec::new(),
        hybrid_traces: Vec::new(),
        beampatterns: Vec::new(),
        cuts: Vec::new(),
        peaks: Vec::new(),
        files: Vec::new(),
    };
    let mut design_index = 0;
    for &[n_x, n_y] in &config.arrays {
        for &bandwidth in &config.bandwidths_hz {
            for &squint in &config.squint_models {
                for &power_dbw in &config.power_dbw {
                    let point = report.records.len();
                    let design = build_design(
                        config,
                        design_index,
                        [n_x, n_y],
                        bandwidth,
                        squint,
                        power_dbw,
                        &ut_angles,
                        &target_angles,
                        &power_model,
                    )
                    .map_err(|source| HarnessError::Solver { point, source })?;
                    report
                        .digital_traces
                        .extend(design.digital.trace.iter().map(|r| DigitalTraceRow {
                            design_index,
                            iteration: r.iteration,
                            eta: r.eta,
                            objective: r.objective,
                            sum_rate: r.sum_rate,
                            transmit_power: r.transmit_power,
                            inner_iterations: r.inner_iterations,
                        }));
                    for &structure in &config.structures {
                        let weights: &[f64] = match structure {
                            Architecture::FullyDigital => &[1.0],
                            _ => &config.zeta,
                        };
                        for &zeta in weights {
                            let point = report.records.len();
                            let seed = derive_seed(
                                config.seed,
                                &[
                                    n_x as u64,
                                    n_y as u64,
                                    bandwidth.to_bits(),
                                    config.n_subcarriers as u64,
                                    zeta.to_bits(),
                                    label_word(architecture_label(structure)),
                                    label_word(squint_label(squint)),
                                ],
                            );
                            evaluate_point(
                                config,
                                &design,
                                &power_model,
                                PointKey {
                                    index: point,
                                    power_dbw,
                                    structure,
                                    zeta,
                                    squint,
                                    seed,
                                },
                                &hash,
                                &mut report,
                            )
                            .map_err(|source| HarnessError::Solver { point, source })?;
                        }
                    }
                    design_index += 1;
                }
            }
        }
    }
    Ok(report)
}

fn architecture_label(a: Architecture) -> &'static str {
    match a {
        Architecture::FullyDigital => "fully-digital",
        Architecture::FullyConnected => "fully-connected",
        Architecture::PartiallyConnected => "partially-connected",
    }
}

fn squint_label(s: SquintModel) -> &'static str {
    match s {
        SquintModel::Aware => "aware",
        SquintModel::Unaware => "unaware",
    }
}

fn user_angles(config: &ScenarioConfig) -> Vec<SpaceAngle> {
    match config.ut_angle_source {
        UtAngleSource::Explicit => config
            .ut_angles
            .iter()
            .map(|&[x, y]| SpaceAngle {
                theta_x: x,
                theta_y: y,
            })
            .collect(),
        UtAngleSource::Uniform => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[label_word("ut-angles")]));
            (0..config.n_users)
                .map(|_| SpaceAngle {
                    theta_x: rng.random_range(-1.0..=1.0),
                    theta_y: rng.random_range(-1.0..=1.0),
                })
                .collect()
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn build_design(
    config: &ScenarioConfig,
    index: usize,
    [n_x, n_y]: [usize; 2],
    bandwidth: f64,
    squint: SquintModel,
    power_dbw: f64,
    ut_angles: &[SpaceAngle],
    target_angles: &[SpaceAngle],
    power_model: &PowerModel,
) -> crate::Result<Design> {
    let wavelength = SPEED_OF_LIGHT / config.carrier_hz;
    let geom = ArrayGeometry::new(
        n_x,
        n_y,
        config.element_spacing_wavelengths * wavelength,
        config.carrier_hz,
    )?;
    let plan = SubcarrierPlan::new(bandwidth, config.n_subcarriers)?;
    let freqs = subcarrier_frequencies(&plan);
    let noise = thermal_noise(config.boltzmann, &plan, config.noise_temperature_k);
    let gamma = link_budget_power(
        &geom,
        db_to_linear(config.gain_sat_db),
        db_to_linear(config.gain_ut_db),
        config.altitude_m,
    );
    let rician_k = db_to_linear(config.rician_db);
    let stats = ChannelStats::new(
        ut_angles
            .iter()
            .map(|&angle| UtStats {
                angle,
                gamma,
                rician_k,
            })
            .collect(),
    )?;
    let truth = ResponseTable::for_stats(&stats, &plan, &geom, SquintModel::Aware);
    let designed = ResponseTable::for_stats(&stats, &plan, &geom, squint);
    let design_freqs = match squint {
        SquintModel::Aware => freqs.clone(),
        SquintModel::Unaware => vec![0.0; freqs.len()],
    };
    let targets = TargetSet::new(
        target_angles.to_vec(),
        vec![Complex64::new(config.reflectivity, 0.0); target_angles.len()],
    )?;
    let sense = sensing_precoder_at(&targets, &geom, &design_freqs)?.per_subcarrier;

    let budget = db_to_linear(power_dbw);
    let options = SolverOptions {
        dinkelbach_tol: config.dinkelbach_tol,
        inner_tol: config.inner_tol,
        max_outer_iters: config.max_outer_iters,
        max_inner_iters: config.max_inner_iters,
        bisection_tol: config.bisection_tol,
        power_budget: budget,
    };
    let digital = solve_fully_digital(
        &stats,
        &designed,
        noise,
        power_model,
        &options,
        mrt_initialization(&designed, budget),
    )?;
    Ok(Design {
        index,
        geom,
        plan,
        freqs,
        noise,
        stats,
        truth,
        targets,
        sense,
        digital,
    })
}

struct PointKey {
    index: usize,
    power_dbw: f64,
    structure: Architecture,
    zeta: f64,
    squint: SquintModel,
    seed: u64,
}

fn scaled_sensing(config: &ScenarioConfig, design: &Design) -> Vec<CMatrix> {
    design
        .sense
        .iter()
        .zip(&design.digital.precoders.per_subcarrier)
        .map(|(s, b)| {
            let norm = s.norm();
            if norm == 0.0 {
                return s.clone();
            }
            let target = match config.sensing_scaling {
                SensingScaling::PowerMatched => b.norm(),
                SensingScaling::Unit => 1.0,
            };
            s * Complex64::new(target / norm, 0.0)
        })
        .collect()
}

fn evaluate_point(
    config: &ScenarioConfig,
    design: &Design,
    power_model: &PowerModel,
    key: PointKey,
    hash: &str,
    report: &mut RunReport,
) -> crate::Result<()> {
    let hybrid: Option<HybridPrecoder> = match key.structure {
        Architecture::FullyDigital => None,
        Architecture::FullyConnected | Architecture::PartiallyConnected => {
            let structure = if key.structure == Architecture::FullyConnected {
                Structure::FullyConnected
            } else {
                Structure::PartiallyConnected
            };
            let targets = FactorizationTargets::from_digital(
                &design.digital.precoders,
                scaled_sensing(config, design),
                key.zeta,
            )?;
            let options = HybridOptions {
                n_rf_chains: config.n_rf_chains,
                tolerance: config.hybrid_tol,
                max_iterations: config.hybrid_max_iters,
                verify_structure: config.verify_structure,
                init: config.hybrid_init,
            };
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(key.seed, &[label_word("hybrid-init")]));
            Some(solve_hybrid(&targets, structure, &options, &mut rng)?)
        }
    };
    let precoders: DigitalPrecoderSet = match &hybrid {
        Some(h) => h.equivalent(),
        None => design.digital.precoders.clone(),
    };

    let delta_b = design.plan.spacing_hz();
    let bound = rate_upper_bound(
        &precoders,
        &design.stats,
        &design.truth,
        design.noise,
        delta_b,
    )
    .sum();
    let consumed = total_power(&precoders, power_model);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(key.seed, &[label_word("monte-carlo")]));
    let mc = ergodic_rate_mc(
        &precoders,
        &design.stats,
        &design.truth,
        design.noise,
        delta_b,
        config.mc_trials,
        &mut rng,
    );
    let mc_mean: f64 = mc.iter().map(|e| e.mean).sum();
    let mc_stderr = mc.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt();
    let noncentrality = noncentrality_for_covariance(
        &design.targets,
        &precoders.per_subcarrier,
        &design.freqs,
        &design.geom,
        design.noise,
    )?;
    let p_detect = detection_probability(noncentrality, design.targets.len(), config.p_fa)?;

    let converged = design.digital.status == SolveStatus::Converged
        && hybrid.as_ref().is_none_or(HybridPrecoder::converged);
    report.records.push(PointRecord {
        power_dbw: key.power_dbw,
        ee_bound_bits_per_joule: nats_to_bits(bound) / consumed,
        ee_mc_bits_per_joule: nats_to_bits(mc_mean) / consumed,
        ee_mc_stderr: nats_to_bits(mc_stderr) / consumed,
        sum_rate_bits: nats_to_bits(bound),
        tx_power_w: precoders.transmit_power(),
        iters_outer: design.digital.outer_iterations(),
        point_index: key.index,
        design_index: design.index,
        n_elements: design.geom.n_elements(),
        bandwidth_hz: design.plan.bandwidth_hz,
        structure: key.structure,
        zeta: key.zeta,
        squint_model: key.squint,
        eta: design.digital.eta,
        iters_inner: design.digital.inner_iterations(),
        iters_hybrid: hybrid.as_ref().map_or(0, HybridPrecoder::max_iterations),
        converged,
        noncentrality,
        p_detect,
        seed: key.seed,
        config_hash: hash.to_string(),
    });
    if let Some(h) = &hybrid {
        for (m, sub) in h.per_subcarrier.iter().enumerate() {
            report
                .hybrid_traces
                .extend(
                    sub.objective_trace
                        .iter()
                        .enumerate()
                        .map(|(iteration, &objective)| HybridTraceRow {
                            point_index: key.index,
                            subcarrier_index: m,
                            iteration,
                            objective,
                        }),
                );
        }
    }

    match config.beampattern {
        BeampatternOutput::None => {}
        BeampatternOutput::Lattice => {
            let grid = BeampatternGrid::evaluate(
                &precoders.per_subcarrier,
                BeampatternGrid::square_lattice(config.grid_points),
                &design.freqs,
                &design.geom,
            );
            let peak = grid_max(&grid);
            let mut rows = Vec::with_capacity(grid.points.len() * grid.gains.len());
            for (m, gains) in grid.gains.iter().enumerate() {
                for (p, &g) in grid.points.iter().zip(gains) {
                    rows.push(BeampatternRow {
                        theta_x: p.theta_x,
                        theta_y: p.theta_y,
                        subcarrier_index: m,
                        gain_db: relative_db(g, peak),
                    });
                }
            }
            report.beampatterns.push((key.index, rows));
        }
        BeampatternOutput::Cuts => {
            let target = design.targets.angles[0];
            let n = config.grid_points;
            let cell = 2.0 / (n - 1) as f64;
            let cuts = [
                (
                    "horizontal",
                    BeampatternGrid::horizontal_cut(n, target.theta_y),
                    target.theta_x,
                ),
                (
                    "vertical",
                    BeampatternGrid::vertical_cut(n, target.theta_x),
                    target.theta_y,
                ),
            ];
            let mut rows = Vec::new();
            let grids: Vec<(&str, BeampatternGrid, f64)> = cuts
                .into_iter()
                .map(|(name, points, aim)| {
                    (
                        name,
                        BeampatternGrid::evaluate(
                            &precoders.per_subcarrier,
                            points,
                            &design.freqs,
                            &design.geom,
                        ),
                        aim,
                    )
                })
                .collect();
            let peak = grids
                .iter()
                .map(|(_, g, _)| grid_max(g))
                .fold(0.0, f64::max);
            for (name, grid, aim) in &grids {
                for (m, gains) in grid.gains.iter().enumerate() {
                    for (p, &g) in grid.points.iter().zip(gains) {
                        rows.push(CutRow {
                            cut: name.to_string(),
                            theta_x: p.theta_x,
                            theta_y: p.theta_y,
                            subcarrier_index: m,
                            gain_db: relative_db(g, peak),
                        });
                    }
                    let axis = uniform_axis(n);
                    let found = axis[grid.peak_index(m)];
                    report.peaks.push(CutPeak {
                        point_index: key.index,
                        structure: key.structure,
                        squint_model: key.squint,
                        cut: name.to_string(),
                        subcarrier_index: m,
                        peak: found,
                        target: *aim,
                        deviation_cells: ((found - aim) / cell).abs(),
                    });
                }
            }
            report.cuts.push((key.index, rows));
        }
    }
    Ok(())
}

fn grid_max(grid: &BeampatternGrid) -> f64 {
    grid.gains.iter().flatten().copied().fold(0.0, f64::max)
}

fn relative_db(gain: f64, peak: f64) -> f64 {
    if peak <= 0.0 {
        return 0.0;
    }
    10.0 * (gain.max(peak * 1e-30) / peak).log10()
}
