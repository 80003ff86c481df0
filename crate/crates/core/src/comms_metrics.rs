//! Communication-side metrics: SINR, the Jensen upper bound on the ergodic
//! rate, a Monte-Carlo ergodic-rate estimator, power consumption and energy
//! efficiency.
//!
//! Rates are in nats. Per-UT totals are weighted by the subcarrier spacing
//! `Δ_B` passed by the caller, so with `Δ_B` in Hz they come out in nats/s.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_channel_gain, ChannelStats, ResponseTable};
use crate::linalg::{CMatrix, CVector};
use crate::{IsacError, Result};

/// Fully digital (or equivalent) precoders, one `N_t x K` matrix per
/// subcarrier with column `k` feeding UT `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalPrecoderSet {
    pub per_subcarrier: Vec<CMatrix>,
}

impl DigitalPrecoderSet {
    pub fn new(per_subcarrier: Vec<CMatrix>) -> Result<Self> {
        if let Some(first) = per_subcarrier.first() {
            let shape = first.shape();
            if let Some(bad) = per_subcarrier.iter().find(|b| b.shape() != shape) {
                return Err(IsacError::shape(
                    "precoder set",
                    format!("{shape:?}"),
                    format!("{:?}", bad.shape()),
                ));
            }
        }
        if per_subcarrier
            .iter()
            .flat_map(|b| b.iter())
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(IsacError::invalid("precoders", "entries must be finite"));
        }
        Ok(DigitalPrecoderSet { per_subcarrier })
    }

    pub fn zeros(n_elements: usize, n_users: usize, n_subcarriers: usize) -> Self {
        DigitalPrecoderSet {
            per_subcarrier: vec![CMatrix::zeros(n_elements, n_users); n_subcarriers],
        }
    }

    pub fn n_subcarriers(&self) -> usize {
        self.per_subcarrier.len()
    }

    pub fn column(&self, k: usize, m: usize) -> CVector {
        self.per_subcarrier[m].column(k).into_owned()
    }

    /// `Σ_k Σ_m ||b_k[m]||^2`.
    pub fn transmit_power(&self) -> f64 {
        self.per_subcarrier.iter().map(crate::linalg::fro_sq).sum()
    }

    pub fn scaled(&self, s: crate::Complex64) -> Self {
        DigitalPrecoderSet {
            per_subcarrier: self.per_subcarrier.iter().map(|b| b * s).collect(),
        }
    }
}

/// Power-consumption model of the transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    /// Inverse power-amplifier efficiency `ξ`.
    pub inv_amp_eff: f64,
    /// Power per RF chain, W.
    pub p_rfc: f64,
    /// Local oscillator, W.
    pub p_lo: f64,
    /// Baseband precoder, W.
    pub p_bb: f64,
    /// Analog precoding network, W.
    pub p_al: f64,
    pub n_rf_chains: usize,
}

impl PowerModel {
    /// Satellite transmitter figures with `n_rf_chains` chains and no analog
    /// network power.
    pub fn satellite(n_rf_chains: usize) -> Self {
        PowerModel {
            inv_amp_eff: 2.0,
            p_rfc: 0.338,
            p_lo: 0.005,
            p_bb: 0.200,
            p_al: 0.0,
            n_rf_chains,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("inv_amp_eff", self.inv_amp_eff),
            ("p_rfc", self.p_rfc),
            ("p_lo", self.p_lo),
            ("p_bb", self.p_bb),
            ("p_al", self.p_al),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(IsacError::invalid(
                    name,
                    format!("{v} must be finite and >= 0"),
                ));
            }
        }
        Ok(())
    }

    /// Static power `M_t P_RFC + P_LO + P_BB + P_AL`.
    pub fn static_power(&self) -> f64 {
        self.n_rf_chains as f64 * self.p_rfc + self.p_lo + self.p_bb + self.p_al
    }
}

/// `|b_k^H h|^2 / (Σ_{l≠k} |b_l^H h|^2 + N_0)` for the precoder columns of one
/// subcarrier.
pub fn sinr(precoders: &CMatrix, channel: &CVector, noise: f64, k: usize) -> f64 {
    let mut signal = 0.0;
    let mut interference = 0.0;
    for (l, col) in precoders.column_iter().enumerate() {
        let p = col.dotc(channel).norm_sqr();
        if l == k {
            signal = p;
        } else {
            interference += p;
        }
    }
    signal / (interference + noise)
}

/// Beamforming gains `|v_k^H b_k|^2` and interference `Σ_{l≠k} |v_k^H b_l|^2`
/// for every (k, m), before scaling by the channel power.
#[derive(Debug, Clone)]
pub struct LinkGains {
    pub desired: DMatrix<f64>,
    pub interference: DMatrix<f64>,
}

impl LinkGains {
    pub fn compute(precoders: &DigitalPrecoderSet, responses: &ResponseTable) -> Self {
        let k_total = responses.n_users();
        let m_total = responses.n_subcarriers();
        let mut desired = DMatrix::zeros(k_total, m_total);
        let mut interference = DMatrix::zeros(k_total, m_total);
        for m in 0..m_total {
            let b = &precoders.per_subcarrier[m];
            for k in 0..k_total {
                let v = responses.get(k, m);
                for (l, col) in b.column_iter().enumerate() {
                    let p = v.dotc(&col).norm_sqr();
                    if l == k {
                        desired[(k, m)] = p;
                    } else {
                        interference[(k, m)] += p;
                    }
                }
            }
        }
        LinkGains {
            desired,
            interference,
        }
    }
}

/// Jensen upper bound on the ergodic rate.
#[derive(Debug, Clone)]
pub struct RateBound {
    /// `K x M` per-link bounds in nats.
    pub per_link: DMatrix<f64>,
    /// Per-UT totals `Σ_m Δ_B R̄_k[m]`.
    pub per_ut: Vec<f64>,
}

impl RateBound {
    pub fn sum(&self) -> f64 {
        self.per_ut.iter().sum()
    }
}

pub(crate) fn bound_from_gains(
    gains: &LinkGains,
    gammas: &[f64],
    noise: f64,
    delta_b: f64,
) -> RateBound {
    let (k_total, m_total) = gains.desired.shape();
    let mut per_link = DMatrix::zeros(k_total, m_total);
    let mut per_ut = vec![0.0; k_total];
    for k in 0..k_total {
        for m in 0..m_total {
            let g = gammas[k];
            let r =
                (1.0 + g * gains.desired[(k, m)] / (g * gains.interference[(k, m)] + noise)).ln();
            per_link[(k, m)] = r;
            per_ut[k] += delta_b * r;
        }
    }
    RateBound { per_link, per_ut }
}

/// `R̄_k[m] = log(1 + γ_k|v_k^H b_k|^2 / (Σ_{l≠k} γ_k|v_k^H b_l|^2 + N_0))`.
pub fn rate_upper_bound(
    precoders: &DigitalPrecoderSet,
    stats: &ChannelStats,
    responses: &ResponseTable,
    noise: f64,
    delta_b: f64,
) -> RateBound {
    let gains = LinkGains::compute(precoders, responses);
    bound_from_gains(&gains, &stats.gammas(), noise, delta_b)
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Monte-Carlo ergodic rate `Σ_m Δ_B E{log(1 + SINR_k[m])}` per UT over
/// `n_trials` independent gain realisations.
pub fn ergodic_rate_mc<R: Rng + ?Sized>(
    precoders: &DigitalPrecoderSet,
    stats: &ChannelStats,
    responses: &ResponseTable,
    noise: f64,
    delta_b: f64,
    n_trials: usize,
    rng: &mut R,
) -> Vec<RateEstimate> {
    let n_trials = n_trials.max(1);
    let gains = LinkGains::compute(precoders, responses);
    let (k_total, m_total) = gains.desired.shape();
    // Welford running mean and sum of squared deviations per UT.
    let mut mean = vec![0.0; k_total];
    let mut m2 = vec![0.0; k_total];
    for trial in 1..=n_trials {
        for (k, ut) in stats.users.iter().enumerate() {
            let mut rate = 0.0;
            for m in 0..m_total {
                let power = sample_channel_gain(ut.gamma, ut.rician_k, rng).norm_sqr();
                let s =
                    power * gains.desired[(k, m)] / (power * gains.interference[(k, m)] + noise);
                rate += delta_b * s.ln_1p();
            }
            let delta = rate - mean[k];
            mean[k] += delta / trial as f64;
            m2[k] += delta * (rate - mean[k]);
        }
    }
    let n = n_trials as f64;
    (0..k_total)
        .map(|k| {
            let var = if n_trials > 1 {
                (m2[k] / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            RateEstimate {
                mean: mean[k],
                stderr: (var / n).sqrt(),
            }
        })
        .collect()
}

/// `ξ Σ_k Σ_m ||b_k[m]||^2 + P_t`.
pub fn total_power(precoders: &DigitalPrecoderSet, model: &PowerModel) -> f64 {
    model.inv_amp_eff * precoders.transmit_power() + model.static_power()
}

/// Upper-bound sum rate over total consumed power.
pub fn energy_efficiency(
    precoders: &DigitalPrecoderSet,
    stats: &ChannelStats,
    responses: &ResponseTable,
    noise: f64,
    model: &PowerModel,
    delta_b: f64,
) -> Result<f64> {
    let p = total_power(precoders, model);
    if !(p > 0.0) {
        return Err(IsacError::invalid(
            "total power",
            "must be positive to define efficiency",
        ));
    }
    Ok(rate_upper_bound(precoders, stats, responses, noise, delta_b).sum() / p)
}

pub fn nats_to_bits(x: f64) -> f64 {
    x / std::f64::consts::LN_2
}
