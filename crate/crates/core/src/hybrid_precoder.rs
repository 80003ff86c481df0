//! Hybrid analog/digital factorisation of a communication precoder and a
//! sensing precoder.
//!
//! Per subcarrier the weighted residual
//! `ζ ||W_RF W_BB − B_com||² + (1−ζ) ||W_RF W_BB − B_ss U||²`
//! is reduced by block-coordinate descent over the rotation `U`, the digital
//! stage `W_BB` and the unit-modulus analog stage `W_RF`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::comms_metrics::DigitalPrecoderSet;
use crate::linalg::{fro_sq, phase, row_orthonormality_error, unit_phasor, CMatrix, Complex64};
use crate::{IsacError, Result};

/// Residuals below this fraction of the weighted target energy count as
/// converged once they stop moving in absolute terms.
const CONVERGENCE_FLOOR: f64 = 1e-3;

/// Analog network topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    /// Every RF chain drives every antenna.
    FullyConnected,
    /// RF chain `j` drives the `j`-th block of `N_t / M_t` antennas.
    PartiallyConnected,
}

/// Per-subcarrier precoders to be factorised and the communication weight.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationTargets {
    /// `N_t x K` per subcarrier.
    pub comm: Vec<CMatrix>,
    /// `N_t x P_r` per subcarrier.
    pub sense: Vec<CMatrix>,
    /// `ζ ∈ [0, 1]`.
    pub weight: f64,
}

impl FactorizationTargets {
    pub fn new(comm: Vec<CMatrix>, sense: Vec<CMatrix>, weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(IsacError::invalid(
                "zeta",
                format!("{weight} outside [0, 1]"),
            ));
        }
        if comm.len() != sense.len() || comm.is_empty() {
            return Err(IsacError::shape(
                "factorisation targets",
                format!("{} sensing matrices", comm.len()),
                format!("{}", sense.len()),
            ));
        }
        let (n, k) = comm[0].shape();
        let p_r = sense[0].ncols();
        for (c, s) in comm.iter().zip(&sense) {
            if c.shape() != (n, k) || s.shape() != (n, p_r) {
                return Err(IsacError::shape(
                    "factorisation targets",
                    format!("{n}x{k} and {n}x{p_r}"),
                    format!("{:?} and {:?}", c.shape(), s.shape()),
                ));
            }
        }
        if p_r > k {
            return Err(IsacError::invalid(
                "targets",
                format!("P_r = {p_r} exceeds K = {k}"),
            ));
        }
        Ok(FactorizationTargets {
            comm,
            sense,
            weight,
        })
    }

    pub fn from_digital(
        comm: &DigitalPrecoderSet,
        sense: Vec<CMatrix>,
        weight: f64,
    ) -> Result<Self> {
        Self::new(comm.per_subcarrier.clone(), sense, weight)
    }

    pub fn n_subcarriers(&self) -> usize {
        self.comm.len()
    }

    pub fn n_elements(&self) -> usize {
        self.comm[0].nrows()
    }

    pub fn n_users(&self) -> usize {
        self.comm[0].ncols()
    }

    pub fn n_targets(&self) -> usize {
        self.sense[0].ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridOptions {
    /// Number of RF chains `M_t`.
    pub n_rf_chains: usize,
    /// Stop when the objective changes by less than this fraction.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Check the structure constraints on every iterate.
    pub verify_structure: bool,
    pub init: HybridInit,
}

/// Starting point of the analog stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HybridInit {
    /// I.i.d. uniform phases.
    Random,
    /// Phases of the dominant left singular vectors of the blended target
    /// `ζ B_com + (1−ζ) B_ss [I, 0]`; RF chains beyond its rank get random
    /// phases.
    #[default]
    Subspace,
}

impl HybridOptions {
    pub fn new(n_rf_chains: usize) -> Self {
        HybridOptions {
            n_rf_chains,
            tolerance: 1e-6,
            max_iterations: 200,
            verify_structure: false,
            init: HybridInit::default(),
        }
    }
}

/// Factorisation of one subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcarrierHybrid {
    /// `N_t x M_t`.
    pub analog: CMatrix,
    /// `M_t x K`.
    pub digital: CMatrix,
    /// `P_r x K`.
    pub rotation: CMatrix,
    /// Objective at the initial point and after every update cycle.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl SubcarrierHybrid {
    /// `W_RF W_BB`.
    pub fn effective(&self) -> CMatrix {
        &self.analog * &self.digital
    }

    pub fn iterations(&self) -> usize {
        self.objective_trace.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrecoder {
    pub structure: Structure,
    pub per_subcarrier: Vec<SubcarrierHybrid>,
}

impl HybridPrecoder {
    /// Effective precoders `W_RF[m] W_BB[m]`.
    pub fn equivalent(&self) -> DigitalPrecoderSet {
        DigitalPrecoderSet {
            per_subcarrier: self
                .per_subcarrier
                .iter()
                .map(SubcarrierHybrid::effective)
                .collect(),
        }
    }

    pub fn converged(&self) -> bool {
        self.per_subcarrier.iter().all(|s| s.converged)
    }

    pub fn max_iterations(&self) -> usize {
        self.per_subcarrier
            .iter()
            .map(SubcarrierHybrid::iterations)
            .max()
            .unwrap_or(0)
    }
}

/// Weighted residual `ζ||X − B_com||² + (1−ζ)||X − B_ss U||²`, `X = W_RF W_BB`.
pub fn objective(
    analog: &CMatrix,
    digital: &CMatrix,
    comm: &CMatrix,
    sense: &CMatrix,
    rotation: &CMatrix,
    weight: f64,
) -> f64 {
    let x = analog * digital;
    weight * fro_sq(&(&x - comm)) + (1.0 - weight) * fro_sq(&(&x - sense * rotation))
}

/// `[I_{P_r}, 0]`.
pub fn default_rotation(n_targets: usize, n_users: usize) -> CMatrix {
    CMatrix::identity(n_targets, n_users)
}

/// Row-orthonormal `U` minimising `||W_RF W_BB − B_ss U||_F`.
pub fn update_unitary(analog: &CMatrix, digital: &CMatrix, sense: &CMatrix) -> CMatrix {
    let p_r = sense.ncols();
    let k = digital.ncols();
    let cross = sense.adjoint() * (analog * digital);
    let svd = cross.svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => {
            let rank = p_r.min(k);
            let u_thin = u.columns(0, rank).into_owned();
            let v_thin = v_t.rows(0, rank).into_owned();
            let candidate = u_thin * v_thin;
            if candidate.nrows() == p_r && row_orthonormality_error(&candidate) <= 1e-12 {
                candidate
            } else {
                default_rotation(p_r, k)
            }
        }
        _ => default_rotation(p_r, k),
    }
}

/// `ζ B_com + (1−ζ) B_ss U`, so that `A^H C = W_RF^H · blend`.
fn blended_target(comm: &CMatrix, sense: &CMatrix, rotation: &CMatrix, weight: f64) -> CMatrix {
    comm * Complex64::new(weight, 0.0) + sense * rotation * Complex64::new(1.0 - weight, 0.0)
}

/// Least-squares digital stage `(W_RF^H W_RF)^{-1} A^H C`, before the final
/// power normalisation.
pub fn update_digital_fc(
    analog: &CMatrix,
    comm: &CMatrix,
    sense: &CMatrix,
    rotation: &CMatrix,
    weight: f64,
) -> Result<CMatrix> {
    let rhs = analog.adjoint() * blended_target(comm, sense, rotation, weight);
    let gram = analog.adjoint() * analog;
    let chol = gram.cholesky().ok_or(IsacError::SingularGram)?;
    let solution = chol.solve(&rhs);
    if solution
        .iter()
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(IsacError::SingularGram);
    }
    Ok(solution)
}

/// Scales `digital` so that `||W_RF W_BB||_F = ||B_com||_F`.
pub fn normalize_digital(analog: &CMatrix, digital: &CMatrix, comm: &CMatrix) -> CMatrix {
    let current = (analog * digital).norm();
    if current == 0.0 {
        return digital.clone();
    }
    digital * Complex64::new(comm.norm() / current, 0.0)
}

/// One majorisation-minimisation step for `min ||W G − T||_F` over
/// unit-modulus `W`: `W = exp(−j∠Z^T)`, `Z = G T^H − (G G^H − λ_max I) W_prev^H`.
pub fn mm_step(previous: &CMatrix, g: &CMatrix, t: &CMatrix) -> CMatrix {
    let y = g * g.adjoint();
    let lambda = crate::linalg::hermitian_max_eigenvalue(&y);
    let mut shifted = y;
    for i in 0..shifted.nrows() {
        shifted[(i, i)] -= Complex64::new(lambda, 0.0);
    }
    let z = g * t.adjoint() - shifted * previous.adjoint();
    z.transpose().map(|e| unit_phasor(-phase(e)))
}

/// Fully connected analog update.
pub fn update_analog_fc(
    previous: &CMatrix,
    digital: &CMatrix,
    comm: &CMatrix,
    sense: &CMatrix,
    rotation: &CMatrix,
    weight: f64,
) -> CMatrix {
    let (a, b) = (weight.sqrt(), (1.0 - weight).sqrt());
    let g = crate::linalg::hstack(
        &(digital * Complex64::new(a, 0.0)),
        &(digital * Complex64::new(b, 0.0)),
    );
    let t = crate::linalg::hstack(
        &(comm * Complex64::new(a, 0.0)),
        &(sense * rotation * Complex64::new(b, 0.0)),
    );
    mm_step(previous, &g, &t)
}

/// Partially connected digital update: `A^H C` projected onto the sphere of
/// radius `||B_com||_F / √N_g`.
pub fn update_digital_pc(
    analog: &CMatrix,
    comm: &CMatrix,
    sense: &CMatrix,
    rotation: &CMatrix,
    weight: f64,
) -> Result<CMatrix> {
    let n_group = group_size(analog.nrows(), analog.ncols())?;
    let ahc = analog.adjoint() * blended_target(comm, sense, rotation, weight);
    let norm = ahc.norm();
    if norm == 0.0 {
        return Err(IsacError::DegenerateTargets);
    }
    Ok(ahc * Complex64::new(comm.norm() / (n_group as f64).sqrt() / norm, 0.0))
}

/// Partially connected analog update: entry `(i, i / N_g)` is
/// `exp(j∠(a p^H))`, every other entry is zero.
pub fn update_analog_pc(
    digital: &CMatrix,
    comm: &CMatrix,
    sense: &CMatrix,
    rotation: &CMatrix,
    weight: f64,
) -> Result<CMatrix> {
    let n = comm.nrows();
    let m_t = digital.nrows();
    let n_group = group_size(n, m_t)?;
    let blend = blended_target(comm, sense, rotation, weight);
    let mut out = CMatrix::zeros(n, m_t);
    for i in 0..n {
        let j = i / n_group;
        let ap: Complex64 = blend
            .row(i)
            .iter()
            .zip(digital.row(j).iter())
            .map(|(x, y)| x * y.conj())
            .sum();
        out[(i, j)] = unit_phasor(phase(ap));
    }
    Ok(out)
}

fn group_size(n_elements: usize, n_rf_chains: usize) -> Result<usize> {
    if n_rf_chains == 0 || n_elements % n_rf_chains != 0 {
        return Err(IsacError::Indivisible {
            what: "antennas per RF chain",
            total: n_elements,
            parts: n_rf_chains,
        });
    }
    Ok(n_elements / n_rf_chains)
}

/// Random-phase analog stage respecting the topology.
pub fn random_analog<R: Rng + ?Sized>(
    n_elements: usize,
    n_rf_chains: usize,
    structure: Structure,
    rng: &mut R,
) -> Result<CMatrix> {
    let mut w = CMatrix::zeros(n_elements, n_rf_chains);
    match structure {
        Structure::FullyConnected => {
            for e in w.iter_mut() {
                *e = unit_phasor(rng.random_range(0.0..std::f64::consts::TAU));
            }
        }
        Structure::PartiallyConnected => {
            let n_group = group_size(n_elements, n_rf_chains)?;
            for i in 0..n_elements {
                w[(i, i / n_group)] = unit_phasor(rng.random_range(0.0..std::f64::consts::TAU));
            }
        }
    }
    Ok(w)
}

/// Analog stage whose RF chain `j` carries the phases of the `j`-th left
/// singular vector of `target`, restricted to the topology.
pub fn subspace_analog<R: Rng + ?Sized>(
    target: &CMatrix,
    n_rf_chains: usize,
    structure: Structure,
    rng: &mut R,
) -> Result<CMatrix> {
    let mut w = random_analog(target.nrows(), n_rf_chains, structure, rng)?;
    let Some(u) = target.clone().svd(true, false).u else {
        return Ok(w);
    };
    let n_group = match structure {
        Structure::FullyConnected => None,
        Structure::PartiallyConnected => Some(group_size(target.nrows(), n_rf_chains)?),
    };
    for j in 0..n_rf_chains.min(u.ncols()) {
        for i in 0..target.nrows() {
            if n_group.is_none_or(|g| j == i / g) {
                w[(i, j)] = unit_phasor(phase(u[(i, j)]));
            }
        }
    }
    Ok(w)
}

/// Largest deviation of the analog stage from its topology: modulus error of
/// the active entries, or any nonzero entry outside the PC pattern
/// (reported as infinity).
pub fn structure_error(analog: &CMatrix, structure: Structure) -> f64 {
    let mut worst: f64 = 0.0;
    let n_group = match structure {
        Structure::FullyConnected => None,
        Structure::PartiallyConnected => match group_size(analog.nrows(), analog.ncols()) {
            Ok(g) => Some(g),
            Err(_) => return f64::INFINITY,
        },
    };
    for i in 0..analog.nrows() {
        for j in 0..analog.ncols() {
            let z = analog[(i, j)];
            let active = n_group.is_none_or(|g| j == i / g);
            if active {
                worst = worst.max((z.norm() - 1.0).abs());
            } else if z.re != 0.0 || z.im != 0.0 {
                return f64::INFINITY;
            }
        }
    }
    worst
}

fn verify(analog: &CMatrix, rotation: &CMatrix, structure: Structure) -> Result<()> {
    let err = structure_error(analog, structure);
    if err > 1e-12 {
        return Err(IsacError::StructureViolation(format!(
            "analog stage off by {err:e}"
        )));
    }
    let err = row_orthonormality_error(rotation);
    if err > 1e-10 {
        return Err(IsacError::StructureViolation(format!(
            "rotation rows off by {err:e}"
        )));
    }
    Ok(())
}

fn check_dimensions(
    targets: &FactorizationTargets,
    structure: Structure,
    m_t: usize,
) -> Result<()> {
    let n = targets.n_elements();
    let k = targets.n_users();
    if m_t < k || m_t > n {
        return Err(IsacError::invalid(
            "n_rf_chains",
            format!("need K <= M_t <= N_t, got K = {k}, M_t = {m_t}, N_t = {n}"),
        ));
    }
    if structure == Structure::PartiallyConnected {
        group_size(n, m_t)?;
    }
    Ok(())
}

/// Alternating `U → W_BB → W_RF` updates on one subcarrier.
pub fn solve_subcarrier<R: Rng + ?Sized>(
    comm: &CMatrix,
    sense: &CMatrix,
    weight: f64,
    structure: Structure,
    options: &HybridOptions,
    rng: &mut R,
) -> Result<SubcarrierHybrid> {
    let n = comm.nrows();
    let k = comm.ncols();
    let m_t = options.n_rf_chains;
    let mut rotation = default_rotation(sense.ncols(), k);
    let mut analog = match options.init {
        HybridInit::Random => random_analog(n, m_t, structure, rng)?,
        HybridInit::Subspace => subspace_analog(
            &blended_target(comm, sense, &rotation, weight),
            m_t,
            structure,
            rng,
        )?,
    };
    let mut digital = update_digital_fc(&analog, comm, sense, &rotation, 1.0)?;
    if structure == Structure::PartiallyConnected {
        let n_group = group_size(n, m_t)? as f64;
        let norm = digital.norm();
        if norm > 0.0 {
            digital *= Complex64::new(comm.norm() / n_group.sqrt() / norm, 0.0);
        }
    }
    let reference = weight * fro_sq(comm) + (1.0 - weight) * fro_sq(sense);
    let mut current = objective(&analog, &digital, comm, sense, &rotation, weight);
    let mut trace = vec![current];
    let mut converged = false;
    for _ in 0..options.max_iterations {
        rotation = update_unitary(&analog, &digital, sense);
        digital = match structure {
            Structure::FullyConnected => {
                update_digital_fc(&analog, comm, sense, &rotation, weight)?
            }
            Structure::PartiallyConnected => {
                match update_digital_pc(&analog, comm, sense, &rotation, weight) {
                    Ok(d) => d,
                    Err(IsacError::DegenerateTargets) => digital,
                    Err(e) => return Err(e),
                }
            }
        };
        analog = match structure {
            Structure::FullyConnected => {
                update_analog_fc(&analog, &digital, comm, sense, &rotation, weight)
            }
            Structure::PartiallyConnected => {
                update_analog_pc(&digital, comm, sense, &rotation, weight)?
            }
        };
        if options.verify_structure {
            verify(&analog, &rotation, structure)?;
        }
        let next = objective(&analog, &digital, comm, sense, &rotation, weight);
        trace.push(next);
        let change = (current - next).abs();
        current = next;
        if change < options.tolerance * current.max(CONVERGENCE_FLOOR * reference) || current == 0.0
        {
            converged = true;
            break;
        }
    }
    if structure == Structure::FullyConnected {
        digital = normalize_digital(&analog, &digital, comm);
    }
    Ok(SubcarrierHybrid {
        analog,
        digital,
        rotation,
        objective_trace: trace,
        converged,
    })
}

/// Factorises every subcarrier independently, drawing the random analog
/// starting points from `rng` in subcarrier order.
pub fn solve_hybrid<R: Rng + ?Sized>(
    targets: &FactorizationTargets,
    structure: Structure,
    options: &HybridOptions,
    rng: &mut R,
) -> Result<HybridPrecoder> {
    if !(options.tolerance > 0.0) || options.max_iterations == 0 {
        return Err(IsacError::invalid(
            "hybrid options",
            "tolerance and iteration cap must be positive",
        ));
    }
    check_dimensions(targets, structure, options.n_rf_chains)?;
    let per_subcarrier = targets
        .comm
        .iter()
        .zip(&targets.sense)
        .map(|(c, s)| solve_subcarrier(c, s, targets.weight, structure, options, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(HybridPrecoder {
        structure,
        per_subcarrier,
    })
}

#[cfg(test)]
mod tests {
    use super::{
        blended_target, default_rotation, mm_step, objective, random_analog, solve_hybrid,
        structure_error, subspace_analog, update_analog_fc, update_analog_pc, update_digital_fc,
        update_digital_pc, update_unitary, FactorizationTargets, HybridInit, HybridOptions,
        Structure,
    };
    use crate::channel::{
        array_response, ArrayGeometry, ChannelStats, ResponseTable, SpaceAngle, SquintModel,
        UtStats,
    };
    use crate::comms_metrics::DigitalPrecoderSet;
    use crate::comms_metrics::{energy_efficiency, PowerModel};
    use crate::error::IsacError;
    use crate::linalg::c;
    use crate::linalg::{fro_sq, row_orthonormality_error, unit_phasor, CMatrix};
    use crate::sensing::{beampattern_factored, sensing_precoder_at, BeampatternGrid, TargetSet};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn gaussian(rng: &mut ChaCha8Rng, r: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(r, cols, |_, _| {
            c(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    fn random_row_orthonormal(rng: &mut ChaCha8Rng, p: usize, k: usize) -> CMatrix {
        let q = gaussian(rng, k, k).qr().q();
        q.rows(0, p).into_owned()
    }

    #[test]
    fn subspace_start_follows_singular_vectors_and_topology() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let target = gaussian(&mut rng, 12, 2);
        let u = target.clone().svd(true, false).u.unwrap();
        let fc = subspace_analog(&target, 3, Structure::FullyConnected, &mut rng).unwrap();
        assert!(structure_error(&fc, Structure::FullyConnected) < 1e-15);
        for j in 0..2 {
            for i in 0..12 {
                assert!((fc[(i, j)] - u[(i, j)] / u[(i, j)].norm()).norm() < 1e-12);
            }
        }
        let pc = subspace_analog(&target, 3, Structure::PartiallyConnected, &mut rng).unwrap();
        assert!(structure_error(&pc, Structure::PartiallyConnected) < 1e-15);
        assert!((pc[(5, 1)] - u[(5, 1)] / u[(5, 1)].norm()).norm() < 1e-12);
    }

    #[test]
    fn both_starts_descend() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let comm = gaussian(&mut rng, 8, 2);
        let sense = gaussian(&mut rng, 8, 2);
        for init in [HybridInit::Random, HybridInit::Subspace] {
            let mut options = HybridOptions::new(2);
            options.init = init;
            let targets =
                FactorizationTargets::new(vec![comm.clone()], vec![sense.clone()], 0.5).unwrap();
            let h = solve_hybrid(&targets, Structure::FullyConnected, &options, &mut rng).unwrap();
            let t = &h.per_subcarrier[0].objective_trace;
            assert!(t.windows(2).all(|w| w[1] <= w[0] + 1e-9 * t[0]), "{init:?}");
        }
    }

    #[test]
    fn procrustes_identity_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sense = gaussian(&mut rng, 6, 2);
        let u = update_unitary(&CMatrix::identity(6, 6), &sense, &sense);
        assert!((u - CMatrix::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn procrustes_degenerate_still_row_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sense = gaussian(&mut rng, 6, 2);
        let u = update_unitary(&CMatrix::identity(6, 6), &CMatrix::zeros(6, 4), &sense);
        assert_eq!(u.shape(), (2, 4));
        assert!(row_orthonormality_error(&u) < 1e-10);
    }

    #[test]
    fn procrustes_beats_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gaussian(&mut rng, 6, 4);
        let sense = gaussian(&mut rng, 6, 2);
        let u = update_unitary(&CMatrix::identity(6, 6), &x, &sense);
        let best = (&x - &sense * &u).norm();
        for _ in 0..10_000 {
            let r = random_row_orthonormal(&mut rng, 2, 4);
            assert!(best <= (&x - &sense * r).norm() + 1e-12);
        }
    }

    #[test]
    fn fc_digital_exact_factorisation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let analog = random_analog(4, 4, Structure::FullyConnected, &mut rng).unwrap();
        let comm = gaussian(&mut rng, 4, 2);
        let sense = gaussian(&mut rng, 4, 1);
        let rot = default_rotation(1, 2);
        let d = update_digital_fc(&analog, &comm, &sense, &rot, 1.0).unwrap();
        assert!((&analog * &d - &comm).norm() < 1e-10 * comm.norm());
    }

    #[test]
    fn fc_digital_zero_weight_fits_sensing_side() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let analog = random_analog(8, 3, Structure::FullyConnected, &mut rng).unwrap();
        let comm = gaussian(&mut rng, 8, 2);
        let sense = gaussian(&mut rng, 8, 2);
        let rot = random_row_orthonormal(&mut rng, 2, 2);
        let d = update_digital_fc(&analog, &comm, &sense, &rot, 0.0).unwrap();
        let target = &sense * &rot;
        let ls = (analog.adjoint() * &analog).try_inverse().unwrap() * analog.adjoint() * &target;
        assert!((d - ls).norm() < 1e-10);
    }

    #[test]
    fn fc_digital_is_least_squares_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let analog = random_analog(8, 3, Structure::FullyConnected, &mut rng).unwrap();
        let comm = gaussian(&mut rng, 8, 2);
        let sense = gaussian(&mut rng, 8, 1);
        let rot = random_row_orthonormal(&mut rng, 1, 2);
        let d = update_digital_fc(&analog, &comm, &sense, &rot, 0.3).unwrap();
        let base = objective(&analog, &d, &comm, &sense, &rot, 0.3);
        for _ in 0..500 {
            let delta = gaussian(&mut rng, 3, 2) * c(1e-3, 0.0);
            assert!(base <= objective(&analog, &(&d + delta), &comm, &sense, &rot, 0.3) + 1e-12);
        }
    }

    #[test]
    fn singular_gram_is_reported() {
        let analog = CMatrix::from_element(4, 2, c(1.0, 0.0));
        let comm = CMatrix::from_element(4, 2, c(1.0, 0.0));
        let sense = CMatrix::from_element(4, 1, c(1.0, 0.0));
        let r = update_digital_fc(&analog, &comm, &sense, &default_rotation(1, 2), 0.5);
        assert_eq!(r, Err(IsacError::SingularGram));
    }

    #[test]
    fn mm_scalar_example() {
        let g = CMatrix::from_element(1, 1, c(1.0, 0.0));
        let t = CMatrix::from_column_slice(2, 1, &[c(1.0, 1.0), c(-1.0, 0.0)]);
        let w = mm_step(&CMatrix::from_element(2, 1, c(1.0, 0.0)), &g, &t);
        assert!((w[(0, 0)] - unit_phasor(PI / 4.0)).norm() < 1e-15);
        assert!((w[(1, 0)] - c(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn mm_trace_is_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = gaussian(&mut rng, 2, 4);
        let t = gaussian(&mut rng, 8, 4);
        let mut w = random_analog(8, 2, Structure::FullyConnected, &mut rng).unwrap();
        let mut prev = (&w * &g - &t).norm();
        for _ in 0..50 {
            w = mm_step(&w, &g, &t);
            let now = (&w * &g - &t).norm();
            assert!(now <= prev * (1.0 + 1e-12));
            prev = now;
        }
        // A fixed point stays put.
        let again = mm_step(&w, &g, &t);
        assert!((&again * &g - &t).norm() <= prev * (1.0 + 1e-12));
    }

    #[test]
    fn pc_digital_norm_and_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let analog = random_analog(8, 2, Structure::PartiallyConnected, &mut rng).unwrap();
        let comm = gaussian(&mut rng, 8, 2);
        let sense = gaussian(&mut rng, 8, 1);
        let rot = default_rotation(1, 2);
        let d = update_digital_pc(&analog, &comm, &sense, &rot, 0.6).unwrap();
        assert!((d.norm() - comm.norm() / 2.0).abs() < 1e-12);
        let ahc = analog.adjoint() * blended_target(&comm, &sense, &rot, 0.6);
        let radius = comm.norm() / 2.0;
        // Sampling oracle: no random point on the sphere is closer to A^H C.
        let best = (&ahc - &d).norm();
        for _ in 0..10_000 {
            let w = gaussian(&mut rng, 2, 2);
            let w = &w * c(radius / w.norm(), 0.0);
            assert!(best <= (&ahc - w).norm() + 1e-12);
        }
        assert!(update_digital_pc(
            &analog,
            &CMatrix::zeros(8, 2),
            &CMatrix::zeros(8, 1),
            &rot,
            0.6
        )
        .is_err());
    }

    #[test]
    fn pc_digital_unchanged_when_already_on_sphere() {
        let analog = CMatrix::from_fn(
            4,
            2,
            |i, j| if j == i / 2 { c(1.0, 0.0) } else { c(0.0, 0.0) },
        );
        // A^H C for ζ = 1 is W_RF^H B_com.
        let comm = CMatrix::from_column_slice(
            4,
            1,
            &[
                c(1.0, 0.0),
                unit_phasor(2.0 * PI / 3.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
            ],
        );
        let sense = CMatrix::zeros(4, 1);
        let d = update_digital_pc(&analog, &comm, &sense, &default_rotation(1, 1), 1.0).unwrap();
        let ahc = analog.adjoint() * &comm;
        // ||A^H C|| = |1 + e^{j2π/3}| = 1 = ||B_com|| / √N_g.
        assert!((d - ahc).norm() < 1e-14);
    }

    #[test]
    fn pc_analog_cases() {
        let digital = CMatrix::from_element(1, 1, c(1.0, 0.0));
        let comm = CMatrix::from_element(1, 1, c(0.0, 1.0));
        let sense = CMatrix::zeros(1, 1);
        let w = update_analog_pc(&digital, &comm, &sense, &default_rotation(1, 1), 1.0).unwrap();
        assert!((w[(0, 0)] - c(0.0, 1.0)).norm() < 1e-15);
        // Phase-grid oracle for the scalar case.
        let best = (comm[(0, 0)] - w[(0, 0)]).norm();
        for i in 0..3600 {
            let phi = i as f64 * PI / 1800.0;
            assert!(best <= (comm[(0, 0)] - unit_phasor(phi)).norm() + 1e-15);
        }

        let real = update_analog_pc(
            &digital,
            &CMatrix::from_element(1, 1, c(2.0, 0.0)),
            &sense,
            &default_rotation(1, 1),
            1.0,
        )
        .unwrap();
        assert_eq!(real[(0, 0)], c(1.0, 0.0));
        let zero = update_analog_pc(
            &digital,
            &CMatrix::zeros(1, 1),
            &sense,
            &default_rotation(1, 1),
            1.0,
        )
        .unwrap();
        assert_eq!(zero[(0, 0)], c(1.0, 0.0));

        assert!(matches!(
            update_analog_pc(
                &CMatrix::zeros(3, 1),
                &CMatrix::zeros(8, 1),
                &CMatrix::zeros(8, 1),
                &default_rotation(1, 1),
                1.0
            ),
            Err(IsacError::Indivisible { .. })
        ));
    }

    #[test]
    fn pc_power_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = random_analog(12, 3, Structure::PartiallyConnected, &mut rng).unwrap();
        let d = gaussian(&mut rng, 3, 2);
        assert!((fro_sq(&(&w * &d)) - 4.0 * fro_sq(&d)).abs() < 1e-10 * fro_sq(&d));
    }

    fn desk_targets(seed: u64, weight: f64, n_sub: usize) -> FactorizationTargets {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geom = ArrayGeometry::half_wavelength(4, 4, 20e9).unwrap();
        let freqs: Vec<f64> = (0..n_sub).map(|i| i as f64 * 1e8).collect();
        let angles: Vec<SpaceAngle> = (0..3)
            .map(|_| {
                SpaceAngle::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).unwrap()
            })
            .collect();
        let comm: Vec<CMatrix> = freqs
            .iter()
            .map(|&f| {
                let cols: Vec<_> = angles
                    .iter()
                    .map(|a| array_response(f, *a, &geom) * c(0.3, 0.1))
                    .collect();
                CMatrix::from_columns(&cols)
            })
            .collect();
        let targets = TargetSet::unit(vec![
            SpaceAngle::new(-0.3, 0.7).unwrap(),
            SpaceAngle::new(0.6, -0.2).unwrap(),
        ])
        .unwrap();
        let sense = sensing_precoder_at(&targets, &geom, &freqs)
            .unwrap()
            .per_subcarrier;
        FactorizationTargets::new(comm, sense, weight).unwrap()
    }

    #[test]
    fn descent_and_structure_for_both_topologies() {
        for structure in [Structure::FullyConnected, Structure::PartiallyConnected] {
            for weight in [0.0, 0.3, 0.7, 1.0] {
                let targets = desk_targets(10, weight, 2);
                let mut opts = HybridOptions::new(4);
                opts.verify_structure = true;
                let mut rng = ChaCha8Rng::seed_from_u64(11);
                let sol = solve_hybrid(&targets, structure, &opts, &mut rng).unwrap();
                for sub in &sol.per_subcarrier {
                    let t = &sub.objective_trace;
                    let scale = t.iter().copied().fold(0.0, f64::max);
                    assert!(
                        t.windows(2).all(|w| w[1] <= w[0] + 1e-9 * scale),
                        "{structure:?} {weight}: {t:?}"
                    );
                    assert!(t.len() <= 201);
                    assert!(structure_error(&sub.analog, structure) <= 1e-12);
                    assert!(row_orthonormality_error(&sub.rotation) <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn effective_power_matches_communication_precoder() {
        for structure in [Structure::FullyConnected, Structure::PartiallyConnected] {
            let targets = desk_targets(12, 0.5, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            let sol = solve_hybrid(&targets, structure, &HybridOptions::new(4), &mut rng).unwrap();
            for (sub, comm) in sol.per_subcarrier.iter().zip(&targets.comm) {
                assert!((sub.effective().norm() - comm.norm()).abs() < 1e-10 * comm.norm());
            }
        }
    }

    #[test]
    fn full_rank_analog_reproduces_communication_precoder() {
        let geom = ArrayGeometry::half_wavelength(2, 2, 20e9).unwrap();
        let users = vec![
            UtStats {
                angle: SpaceAngle::new(0.2, -0.4).unwrap(),
                gamma: 1.0,
                rician_k: 10.0,
            },
            UtStats {
                angle: SpaceAngle::new(-0.7, 0.1).unwrap(),
                gamma: 0.5,
                rician_k: 10.0,
            },
        ];
        let stats = ChannelStats::new(users).unwrap();
        let freqs = [0.0, 1e8];
        let angles: Vec<SpaceAngle> = stats.users.iter().map(|u| u.angle).collect();
        let responses = ResponseTable::build(&angles, &freqs, &geom, SquintModel::Aware);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let comm: Vec<CMatrix> = (0..2).map(|_| gaussian(&mut rng, 4, 2)).collect();
        let sense = vec![CMatrix::zeros(4, 1); 2];
        let targets = FactorizationTargets::new(comm.clone(), sense, 1.0).unwrap();
        let sol = solve_hybrid(
            &targets,
            Structure::FullyConnected,
            &HybridOptions::new(4),
            &mut rng,
        )
        .unwrap();
        let eq = sol.equivalent();
        let model = PowerModel::satellite(4);
        let digital = DigitalPrecoderSet::new(comm).unwrap();
        let a = energy_efficiency(&eq, &stats, &responses, 0.1, &model, 1.0).unwrap();
        let b = energy_efficiency(&digital, &stats, &responses, 0.1, &model, 1.0).unwrap();
        assert!((a / b - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sensing_only_weight_reproduces_beampattern() {
        let targets = desk_targets(15, 0.0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let geom = ArrayGeometry::half_wavelength(4, 4, 20e9).unwrap();
        let grid = BeampatternGrid::square_lattice(41);
        for structure in [Structure::FullyConnected, Structure::PartiallyConnected] {
            let sol = solve_hybrid(&targets, structure, &HybridOptions::new(4), &mut rng).unwrap();
            let hybrid =
                beampattern_factored(&sol.per_subcarrier[0].effective(), &grid, 0.0, &geom);
            let reference = beampattern_factored(&targets.sense[0], &grid, 0.0, &geom);
            let sh: f64 = hybrid.iter().sum();
            let sr: f64 = reference.iter().sum();
            let err: f64 = hybrid
                .iter()
                .zip(&reference)
                .map(|(h, r)| (h / sh - r / sr).powi(2))
                .sum();
            let energy: f64 = reference.iter().map(|r| (r / sr).powi(2)).sum();
            assert!(err / energy <= 0.05, "{structure:?}: {}", err / energy);
        }
    }

    #[test]
    fn rejects_bad_dimensions() {
        let targets = desk_targets(17, 0.5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(solve_hybrid(
            &targets,
            Structure::FullyConnected,
            &HybridOptions::new(2),
            &mut rng
        )
        .is_err());
        assert!(solve_hybrid(
            &targets,
            Structure::PartiallyConnected,
            &HybridOptions::new(5),
            &mut rng
        )
        .is_err());
        assert!(
            FactorizationTargets::new(targets.comm.clone(), targets.sense.clone(), 1.5).is_err()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn unitary_update_is_row_orthonormal(seed in 0u64..10_000, p in 1usize..4, extra in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = p + extra;
            let u = update_unitary(&CMatrix::identity(6, 6), &gaussian(&mut rng, 6, k), &gaussian(&mut rng, 6, p));
            prop_assert!(row_orthonormality_error(&u) <= 1e-10);
        }

        #[test]
        fn fc_analog_update_is_unit_modulus(seed in 0u64..10_000, weight in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prev = random_analog(6, 3, Structure::FullyConnected, &mut rng).unwrap();
            let w = update_analog_fc(&prev, &gaussian(&mut rng, 3, 2), &gaussian(&mut rng, 6, 2), &gaussian(&mut rng, 6, 1), &default_rotation(1, 2), weight);
            prop_assert!(structure_error(&w, Structure::FullyConnected) <= 1e-12);
        }
    }
}
