//! Sub-arrayed sensing precoder, transmit beampattern and detection
//! performance.

pub mod detection;

use serde::{Deserialize, Serialize};

pub use detection::{detection_probability, required_noncentrality};

use crate::channel::{
    array_response, subcarrier_frequencies, ArrayGeometry, SpaceAngle, SubcarrierPlan,
};
use crate::linalg::{fro_sq, CMatrix, CVector, Complex64};
use crate::{IsacError, Result};

/// Targets to illuminate: directions and complex reflection coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSet {
    pub angles: Vec<SpaceAngle>,
    pub reflectivity: Vec<Complex64>,
}

impl TargetSet {
    pub fn new(angles: Vec<SpaceAngle>, reflectivity: Vec<Complex64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(IsacError::invalid("targets", "need at least one target"));
        }
        if angles.len() != reflectivity.len() {
            return Err(IsacError::shape(
                "target reflectivity",
                format!("{} coefficients", angles.len()),
                format!("{}", reflectivity.len()),
            ));
        }
        Ok(TargetSet {
            angles,
            reflectivity,
        })
    }

    /// Unit reflectivity for every target.
    pub fn unit(angles: Vec<SpaceAngle>) -> Result<Self> {
        let n = angles.len();
        Self::new(angles, vec![Complex64::new(1.0, 0.0); n])
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// `A(Θ) = [v(f, ϑ_1), ..., v(f, ϑ_P)]`.
    pub fn steering_matrix(&self, freq_offset: f64, geom: &ArrayGeometry) -> CMatrix {
        let cols: Vec<CVector> = self
            .angles
            .iter()
            .map(|a| array_response(freq_offset, *a, geom))
            .collect();
        CMatrix::from_columns(&cols)
    }
}

/// Block-diagonal sensing precoders `B_ss[m]`, `N_t x P_r` each.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingPrecoder {
    pub per_subcarrier: Vec<CMatrix>,
}

/// Sensing precoder whose blocks follow the subcarrier frequencies.
pub fn sensing_precoder(
    targets: &TargetSet,
    geom: &ArrayGeometry,
    plan: &SubcarrierPlan,
) -> Result<SensingPrecoder> {
    sensing_precoder_at(targets, geom, &subcarrier_frequencies(plan))
}

/// Sensing precoder evaluated at explicit frequency offsets. Passing zeros
/// gives the squint-unaware design.
///
/// Column `p` is nonzero only on rows `p L .. (p+1) L`, `L = N_t / P_r`, where
/// it copies the matching entries of `v(f_m, ϑ_p)`.
pub fn sensing_precoder_at(
    targets: &TargetSet,
    geom: &ArrayGeometry,
    freqs: &[f64],
) -> Result<SensingPrecoder> {
    let n = geom.n_elements();
    let p_r = targets.len();
    if p_r == 0 || n % p_r != 0 {
        return Err(IsacError::Indivisible {
            what: "antennas per sensing subarray",
            total: n,
            parts: p_r,
        });
    }
    let block = n / p_r;
    let per_subcarrier = freqs
        .iter()
        .map(|&f| {
            let mut b = CMatrix::zeros(n, p_r);
            for (p, angle) in targets.angles.iter().enumerate() {
                let v = array_response(f, *angle, geom);
                let rows = p * block..(p + 1) * block;
                for i in rows {
                    b[(i, p)] = v[i];
                }
            }
            b
        })
        .collect();
    Ok(SensingPrecoder { per_subcarrier })
}

/// `X = W_RF W_BB W_BB^H W_RF^H`.
pub fn covariance_from_hybrid(analog: &CMatrix, digital: &CMatrix) -> Result<CMatrix> {
    if analog.ncols() != digital.nrows() {
        return Err(IsacError::shape(
            "covariance",
            format!("digital precoder with {} rows", analog.ncols()),
            format!("{} rows", digital.nrows()),
        ));
    }
    let b = analog * digital;
    Ok(&b * b.adjoint())
}

/// `Q(ϑ) = v(f, ϑ)^H X v(f, ϑ)` on every grid point.
pub fn beampattern(
    cov: &CMatrix,
    grid: &[SpaceAngle],
    freq_offset: f64,
    geom: &ArrayGeometry,
) -> Vec<f64> {
    grid.iter()
        .map(|a| {
            let v = array_response(freq_offset, *a, geom);
            (v.adjoint() * cov * &v)[(0, 0)].re
        })
        .collect()
}

/// Beampattern of `X = F F^H` evaluated as `||F^H v||^2`, which avoids forming
/// the `N_t x N_t` covariance.
pub fn beampattern_factored(
    factor: &CMatrix,
    grid: &[SpaceAngle],
    freq_offset: f64,
    geom: &ArrayGeometry,
) -> Vec<f64> {
    grid.iter()
        .map(|a| {
            let v = array_response(freq_offset, *a, geom);
            factor.column_iter().map(|c| c.dotc(&v).norm_sqr()).sum()
        })
        .collect()
}

/// Beampattern gains on a set of points for every subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct BeampatternGrid {
    pub points: Vec<SpaceAngle>,
    /// `gains[m][i]` is the gain of point `i` on subcarrier `m`.
    pub gains: Vec<Vec<f64>>,
}

impl BeampatternGrid {
    /// Evaluates `X[m] = F[m] F[m]^H` over `points` for every subcarrier.
    pub fn evaluate(
        factors: &[CMatrix],
        points: Vec<SpaceAngle>,
        freqs: &[f64],
        geom: &ArrayGeometry,
    ) -> Self {
        let gains = factors
            .iter()
            .zip(freqs)
            .map(|(f, &freq)| beampattern_factored(f, &points, freq, geom))
            .collect();
        BeampatternGrid { points, gains }
    }

    /// Uniform `n x n` lattice over `[-1, 1]^2`, x varying fastest.
    pub fn square_lattice(n: usize) -> Vec<SpaceAngle> {
        let axis = uniform_axis(n);
        let mut out = Vec::with_capacity(n * n);
        for &y in &axis {
            for &x in &axis {
                out.push(SpaceAngle {
                    theta_x: x,
                    theta_y: y,
                });
            }
        }
        out
    }

    /// 1-D cut along `θx` at fixed `θy`.
    pub fn horizontal_cut(n: usize, theta_y: f64) -> Vec<SpaceAngle> {
        uniform_axis(n)
            .into_iter()
            .map(|x| SpaceAngle {
                theta_x: x,
                theta_y,
            })
            .collect()
    }

    /// 1-D cut along `θy` at fixed `θx`.
    pub fn vertical_cut(n: usize, theta_x: f64) -> Vec<SpaceAngle> {
        uniform_axis(n)
            .into_iter()
            .map(|y| SpaceAngle {
                theta_x,
                theta_y: y,
            })
            .collect()
    }

    /// Index of the largest gain on subcarrier `m`.
    pub fn peak_index(&self, m: usize) -> usize {
        argmax(&self.gains[m])
    }
}

pub const DEFAULT_GRID_POINTS: usize = 181;

pub fn uniform_axis(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
        .collect()
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        })
        .0
}

/// Noncentrality of the detector under isotropic probing,
/// `E{x_r x_r^H} = P / (M N_t) I`:
/// `ς = Σ_m (P / (M N_t)) ||A_m diag(β) A_m^T||_F^2 / (M N_0)`.
pub fn noncentrality(
    targets: &TargetSet,
    power_budget: f64,
    plan: &SubcarrierPlan,
    geom: &ArrayGeometry,
    noise: f64,
) -> Result<f64> {
    check_noise(noise)?;
    let freqs = subcarrier_frequencies(plan);
    let m_total = freqs.len() as f64;
    let probe = power_budget / (m_total * geom.n_elements() as f64);
    let beta = CMatrix::from_diagonal(&CVector::from_vec(targets.reflectivity.clone()));
    let total: f64 = freqs
        .iter()
        .map(|&f| {
            let a = targets.steering_matrix(f, geom);
            probe * fro_sq(&(&a * &beta * a.transpose()))
        })
        .sum();
    Ok(total / (m_total * noise))
}

/// Noncentrality for a designed transmit covariance `X[m] = F[m] F[m]^H`:
/// `ς = Σ_m E||G_m x[m]||^2 / (M N_0)` with echo matrix
/// `G_m = conj(A_m) diag(β) A_m^H`.
///
/// The transmit side uses `A^H`, the same steering convention as the
/// beampattern `v^H X v`, so power steered at a target raises `ς`. For the
/// isotropic covariance this matches [`noncentrality`] whenever the
/// reflection coefficients are real.
pub fn noncentrality_for_covariance(
    targets: &TargetSet,
    factors: &[CMatrix],
    freqs: &[f64],
    geom: &ArrayGeometry,
    noise: f64,
) -> Result<f64> {
    check_noise(noise)?;
    if factors.len() != freqs.len() {
        return Err(IsacError::shape(
            "covariance factors",
            format!("{} subcarriers", freqs.len()),
            format!("{}", factors.len()),
        ));
    }
    let beta = CMatrix::from_diagonal(&CVector::from_vec(targets.reflectivity.clone()));
    let total: f64 = factors
        .iter()
        .zip(freqs)
        .map(|(f, &freq)| {
            let a = targets.steering_matrix(freq, geom);
            let projected = &beta * (a.adjoint() * f);
            fro_sq(&(a.map(|z| z.conj()) * projected))
        })
        .sum();
    Ok(total / (freqs.len() as f64 * noise))
}

fn check_noise(noise: f64) -> Result<()> {
    if !(noise > 0.0) {
        return Err(IsacError::invalid(
            "noise",
            format!("{noise} must be positive"),
        ));
    }
    Ok(())
}
