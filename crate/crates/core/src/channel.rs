//! Planar-array geometry, OFDM subcarrier plan and the beam-squint-aware
//! downlink channel.
//!
//! Each UT sees the effective post-synchronisation channel
//! `h_k[m] = v_k[m] * g_k[m]`, where `v_k[m]` is the unit-norm planar-array
//! response evaluated at the absolute subcarrier frequency `f_c + f_m` (this is
//! where beam squint enters) and `g_k[m]` is a Rician gain with average power
//! `gamma_k`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{unit_phasor, CMatrix, CVector, Complex64};
use crate::{IsacError, Result, SPEED_OF_LIGHT};

/// Rician factors at or above this value are treated as a pure line-of-sight
/// gain with no scattered component.
pub const LOS_ONLY_RICIAN: f64 = 1e12;

/// Uniform planar array with equal spacing on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_x: usize,
    pub n_y: usize,
    /// Element spacing in metres.
    pub spacing: f64,
    pub carrier_hz: f64,
}

impl ArrayGeometry {
    pub fn new(n_x: usize, n_y: usize, spacing: f64, carrier_hz: f64) -> Result<Self> {
        let geom = ArrayGeometry {
            n_x,
            n_y,
            spacing,
            carrier_hz,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Array with half-wavelength spacing at the carrier.
    pub fn half_wavelength(n_x: usize, n_y: usize, carrier_hz: f64) -> Result<Self> {
        Self::new(n_x, n_y, SPEED_OF_LIGHT / carrier_hz / 2.0, carrier_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_y == 0 {
            return Err(IsacError::invalid(
                "array size",
                "both axes need at least one element",
            ));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(IsacError::invalid(
                "spacing",
                format!("{} must be positive", self.spacing),
            ));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(IsacError::invalid(
                "carrier_hz",
                format!("{} must be positive", self.carrier_hz),
            ));
        }
        Ok(())
    }

    pub fn n_elements(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }
}

/// OFDM plan: `M` subcarriers spread over `B_w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubcarrierPlan {
    pub bandwidth_hz: f64,
    pub n_subcarriers: usize,
}

impl SubcarrierPlan {
    pub fn new(bandwidth_hz: f64, n_subcarriers: usize) -> Result<Self> {
        if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
            return Err(IsacError::invalid(
                "bandwidth_hz",
                format!("{bandwidth_hz} must be positive"),
            ));
        }
        if n_subcarriers == 0 {
            return Err(IsacError::invalid(
                "n_subcarriers",
                "need at least one subcarrier",
            ));
        }
        Ok(SubcarrierPlan {
            bandwidth_hz,
            n_subcarriers,
        })
    }

    /// Subcarrier separation `B_w / M`.
    pub fn spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.n_subcarriers as f64
    }

    /// Symbol duration `1 / B_w`.
    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }
}

/// Baseband offsets `f_m = (m - (M+1)/2) * Δ_B`, `m = 1..M`.
pub fn subcarrier_frequencies(plan: &SubcarrierPlan) -> Vec<f64> {
    let m_total = plan.n_subcarriers as f64;
    let delta = plan.spacing_hz();
    (1..=plan.n_subcarriers)
        .map(|m| (m as f64 - (m_total + 1.0) / 2.0) * delta)
        .collect()
}

/// Direction expressed as a pair of space angles in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceAngle {
    pub theta_x: f64,
    pub theta_y: f64,
}

impl SpaceAngle {
    pub fn new(theta_x: f64, theta_y: f64) -> Result<Self> {
        for (name, v) in [("theta_x", theta_x), ("theta_y", theta_y)] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(IsacError::invalid(
                    name,
                    format!("space angle {v} outside [-1, 1]"),
                ));
            }
        }
        Ok(SpaceAngle { theta_x, theta_y })
    }

    /// Space angles from the physical AoD pair (radians):
    /// `θx' = sin θy cos θx`, `θy' = cos θy`.
    pub fn from_physical(aod_x: f64, aod_y: f64) -> Self {
        SpaceAngle {
            theta_x: aod_y.sin() * aod_x.cos(),
            theta_y: aod_y.cos(),
        }
    }

    pub const BORESIGHT: SpaceAngle = SpaceAngle {
        theta_x: 0.0,
        theta_y: 0.0,
    };
}

/// Statistical CSI of one UT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtStats {
    pub angle: SpaceAngle,
    /// Average channel power `E|g|^2` (linear).
    pub gamma: f64,
    /// Rician factor (linear).
    pub rician_k: f64,
}

/// Per-UT statistical CSI, one entry per UT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub users: Vec<UtStats>,
}

impl ChannelStats {
    pub fn new(users: Vec<UtStats>) -> Result<Self> {
        for u in &users {
            if !(u.gamma >= 0.0) {
                return Err(IsacError::invalid(
                    "gamma",
                    format!("{} must be >= 0", u.gamma),
                ));
            }
            if !(u.rician_k >= 0.0) {
                return Err(IsacError::invalid(
                    "rician_k",
                    format!("{} must be >= 0", u.rician_k),
                ));
            }
        }
        Ok(ChannelStats { users })
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.gamma).collect()
    }
}

/// Propagation delay from element (1,1) to element `(n_x_idx, n_y_idx)`
/// (1-based indices) towards direction `angle`, in seconds.
pub fn element_delay(
    n_x_idx: usize,
    n_y_idx: usize,
    angle: SpaceAngle,
    geom: &ArrayGeometry,
) -> Result<f64> {
    if n_x_idx == 0 || n_y_idx == 0 || n_x_idx > geom.n_x || n_y_idx > geom.n_y {
        return Err(IsacError::IndexOutOfBounds {
            n_x: n_x_idx,
            n_y: n_y_idx,
            size_x: geom.n_x,
            size_y: geom.n_y,
        });
    }
    let steps = (n_x_idx - 1) as f64 * angle.theta_x + (n_y_idx - 1) as f64 * angle.theta_y;
    Ok(geom.spacing * steps / SPEED_OF_LIGHT)
}

/// Unit-norm uniform linear response of one axis at absolute frequency
/// `f_c + freq_offset`.
pub fn axis_response(
    n: usize,
    freq_offset: f64,
    space_angle: f64,
    geom: &ArrayGeometry,
) -> CVector {
    let step =
        2.0 * PI * (geom.carrier_hz + freq_offset) * geom.spacing / SPEED_OF_LIGHT * space_angle;
    let scale = 1.0 / (n as f64).sqrt();
    CVector::from_iterator(n, (0..n).map(|i| unit_phasor(-step * i as f64) * scale))
}

/// Frequency-dependent planar-array response `v_x ⊗ v_y`.
///
/// Entry `(n_x - 1) * N_y + (n_y - 1)` corresponds to element `(n_x, n_y)`.
pub fn array_response(freq_offset: f64, angle: SpaceAngle, geom: &ArrayGeometry) -> CVector {
    let vx = axis_response(geom.n_x, freq_offset, angle.theta_x, geom);
    let vy = axis_response(geom.n_y, freq_offset, angle.theta_y, geom);
    vx.kronecker(&vy)
}

/// Whether array responses follow the subcarrier frequency or are frozen at
/// the carrier (the squint-unaware baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SquintModel {
    Aware,
    Unaware,
}

/// Array responses `v_k[m]` for every UT and subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTable {
    n_users: usize,
    n_subcarriers: usize,
    n_elements: usize,
    data: Vec<CVector>,
}

impl ResponseTable {
    pub fn build(
        angles: &[SpaceAngle],
        frequencies: &[f64],
        geom: &ArrayGeometry,
        model: SquintModel,
    ) -> Self {
        let mut data = Vec::with_capacity(angles.len() * frequencies.len());
        for angle in angles {
            for &f in frequencies {
                let f = match model {
                    SquintModel::Aware => f,
                    SquintModel::Unaware => 0.0,
                };
                data.push(array_response(f, *angle, geom));
            }
        }
        ResponseTable {
            n_users: angles.len(),
            n_subcarriers: frequencies.len(),
            n_elements: geom.n_elements(),
            data,
        }
    }

    pub fn for_stats(
        stats: &ChannelStats,
        plan: &SubcarrierPlan,
        geom: &ArrayGeometry,
        model: SquintModel,
    ) -> Self {
        let angles: Vec<SpaceAngle> = stats.users.iter().map(|u| u.angle).collect();
        Self::build(&angles, &subcarrier_frequencies(plan), geom, model)
    }

    /// Builds a table directly from vectors laid out user-major.
    pub fn from_vectors(n_users: usize, n_subcarriers: usize, data: Vec<CVector>) -> Result<Self> {
        if data.len() != n_users * n_subcarriers {
            return Err(IsacError::shape(
                "response table",
                format!("{} vectors", n_users * n_subcarriers),
                format!("{}", data.len()),
            ));
        }
        let n_elements = data.first().map_or(0, |v| v.len());
        if data.iter().any(|v| v.len() != n_elements) {
            return Err(IsacError::shape(
                "response table",
                format!("vectors of length {n_elements}"),
                "mixed lengths",
            ));
        }
        Ok(ResponseTable {
            n_users,
            n_subcarriers,
            n_elements,
            data,
        })
    }

    pub fn get(&self, k: usize, m: usize) -> &CVector {
        &self.data[k * self.n_subcarriers + m]
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    /// `N_t x K` matrix with the responses of all UTs on subcarrier `m`.
    pub fn subcarrier_matrix(&self, m: usize) -> CMatrix {
        let mut out = CMatrix::zeros(self.n_elements, self.n_users);
        for k in 0..self.n_users {
            out.set_column(k, self.get(k, m));
        }
        out
    }
}

/// Draws `g = sqrt(γκ/(κ+1)) e^{jψ} + w`, `w ~ CN(0, γ/(κ+1))`.
pub fn sample_channel_gain<R: Rng + ?Sized>(gamma: f64, kappa: f64, rng: &mut R) -> Complex64 {
    let psi = rng.random::<f64>() * 2.0 * PI;
    if kappa >= LOS_ONLY_RICIAN {
        return unit_phasor(psi) * gamma.sqrt();
    }
    let los = unit_phasor(psi) * (gamma * kappa / (kappa + 1.0)).sqrt();
    let sigma = (gamma / (kappa + 1.0) / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    los + Complex64::new(re * sigma, im * sigma)
}

/// `h = gain * response`.
pub fn effective_channel(response: &CVector, gain: Complex64) -> CVector {
    response * gain
}

/// One draw of the per-subcarrier channels of every UT.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// `K x M` gains `g_k[m]`.
    pub gains: nalgebra::DMatrix<Complex64>,
    /// Effective channels laid out like the response table.
    pub effective: Vec<CVector>,
    n_subcarriers: usize,
}

impl ChannelRealization {
    /// Independent gains per UT and per subcarrier.
    pub fn sample<R: Rng + ?Sized>(
        stats: &ChannelStats,
        responses: &ResponseTable,
        rng: &mut R,
    ) -> Self {
        let k_total = responses.n_users();
        let m_total = responses.n_subcarriers();
        let mut gains = nalgebra::DMatrix::zeros(k_total, m_total);
        let mut effective = Vec::with_capacity(k_total * m_total);
        for (k, ut) in stats.users.iter().enumerate() {
            for m in 0..m_total {
                let g = sample_channel_gain(ut.gamma, ut.rician_k, rng);
                gains[(k, m)] = g;
                effective.push(effective_channel(responses.get(k, m), g));
            }
        }
        ChannelRealization {
            gains,
            effective,
            n_subcarriers: m_total,
        }
    }

    pub fn channel(&self, k: usize, m: usize) -> &CVector {
        &self.effective[k * self.n_subcarriers + m]
    }
}

/// Free-space downlink channel power
/// `γ = G_sat G_ut N_t (c / (4π f_c d_0))^2`.
pub fn link_budget_power(geom: &ArrayGeometry, g_sat: f64, g_ut: f64, altitude_m: f64) -> f64 {
    let path = SPEED_OF_LIGHT / (4.0 * PI * geom.carrier_hz * altitude_m);
    g_sat * g_ut * geom.n_elements() as f64 * path * path
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
