//! Energy-efficiency maximising fully digital precoding.
//!
//! The ratio `Σ R̄ / P_total` is handled by Dinkelbach's method. Each
//! parametric subproblem is solved by alternating closed-form updates of the
//! Lagrangian-dual auxiliaries `λ`, the quadratic-transform auxiliaries `ρ`
//! and the precoders, where the power multiplier `t` is found by bisection.
//!
//! Rates inside the solver are per unit bandwidth (nats/s/Hz), so `η` is in
//! nats/s/Hz/W; multiply by the subcarrier spacing for nats/J.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelStats, ResponseTable};
use crate::comms_metrics::{rate_upper_bound, total_power, DigitalPrecoderSet, PowerModel};
use crate::linalg::{CMatrix, Complex64};
use crate::{IsacError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Outer stop: `F(B, η) ≤ dinkelbach_tol · Σ R̄`.
    pub dinkelbach_tol: f64,
    /// Inner stop: relative change of the subproblem objective.
    pub inner_tol: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// Relative width of the final bisection interval on `t`.
    pub bisection_tol: f64,
    /// Total transmit power budget `P`, W.
    pub power_budget: f64,
}

impl SolverOptions {
    pub fn new(power_budget: f64) -> Self {
        SolverOptions {
            dinkelbach_tol: 1e-4,
            inner_tol: 1e-6,
            max_outer_iters: 30,
            max_inner_iters: 200,
            bisection_tol: 1e-12,
            power_budget,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dinkelbach_tol", self.dinkelbach_tol),
            ("inner_tol", self.inner_tol),
            ("bisection_tol", self.bisection_tol),
            ("power_budget", self.power_budget),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(IsacError::invalid(
                    name,
                    format!("{v} must be finite and > 0"),
                ));
            }
        }
        if self.max_outer_iters == 0 {
            return Err(IsacError::invalid("max_outer_iters", "must be >= 1"));
        }
        if self.max_inner_iters == 0 {
            return Err(IsacError::invalid("max_inner_iters", "must be >= 1"));
        }
        Ok(())
    }
}

/// Iterate of the fractional-programming inner loop.
#[derive(Debug, Clone, PartialEq)]
pub struct FpState {
    pub eta: f64,
    /// `K x M`.
    pub lambda: DMatrix<f64>,
    /// `K x M`.
    pub rho: DMatrix<Complex64>,
    pub precoders: DigitalPrecoderSet,
}

impl FpState {
    pub fn new(eta: f64, precoders: DigitalPrecoderSet, n_users: usize) -> Self {
        let m = precoders.n_subcarriers();
        FpState {
            eta,
            lambda: DMatrix::zeros(n_users, m),
            rho: DMatrix::zeros(n_users, m),
            precoders,
        }
    }
}

/// `V_m^H B_m`: entry `(k, l)` is `v_{k,m}^H b_{l,m}`.
fn cross_terms(precoders: &DigitalPrecoderSet, responses: &ResponseTable, m: usize) -> CMatrix {
    responses.subcarrier_matrix(m).adjoint() * &precoders.per_subcarrier[m]
}

/// Optimal Lagrangian-dual auxiliaries: the SINR of every link.
pub fn update_lambda(
    precoders: &DigitalPrecoderSet,
    stats: &ChannelStats,
    responses: &ResponseTable,
    noise: f64,
) -> DMatrix<f64> {
    let k_total = responses.n_users();
    let m_total = responses.n_subcarriers();
    let mut lambda = DMatrix::zeros(k_total, m_total);
    for m in 0..m_total {
        let cross = cross_terms(precoders, responses, m);
        for k in 0..k_total {
            let g = stats.users[k].gamma;
            let row_total: f64 = cross.row(k).iter().map(|z| z.norm_sqr()).sum();
            let desired = cross[(k, k)].norm_sqr();
            lambda[(k, m)] = g * desired / (g * (row_total - desired) + noise);
        }
    }
    lambda
}

/// Optimal quadratic-transform auxiliaries
/// `ρ = √((1+λ)γ) v^H b_k / (Σ_l γ|v^H b_l|² + N_0)`.
pub fn update_rho(
    state: &FpState,
    stats: &ChannelStats,
    responses: &ResponseTable,
    noise: f64,
) -> DMatrix<Complex64> {
    let k_total = responses.n_users();
    let m_total = responses.n_subcarriers();
    let mut rho = DMatrix::zeros(k_total, m_total);
    for m in 0..m_total {
        let cross = cross_terms(&state.precoders, responses, m);
        for k in 0..k_total {
            let g = stats.users[k].gamma;
            let row_total: f64 = cross.row(k).iter().map(|z| z.norm_sqr()).sum();
            let weight = ((1.0 + state.lambda[(k, m)]) * g).sqrt();
            rho[(k, m)] = cross[(k, k)] * (weight / (g * row_total + noise));
        }
    }
    rho
}

/// One subcarrier of `(A_m + tI)^{-1}` restricted to the span of the
/// responses: `B_m(t) = basis · diag(1/(Λ+t)) · proj`.
#[derive(Debug, Clone)]
struct SubcarrierSystem {
    basis: CMatrix,
    eig: Vec<f64>,
    proj: CMatrix,
    /// `[Φ_m]_nn = ||proj_n||²`.
    phi: Vec<f64>,
    cutoff: f64,
}

impl SubcarrierSystem {
    fn inverse(&self, n: usize, t: f64) -> f64 {
        let d = self.eig[n] + t;
        if d <= self.cutoff {
            0.0
        } else {
            1.0 / d
        }
    }

    fn power(&self, t: f64) -> f64 {
        self.phi
            .iter()
            .enumerate()
            .map(|(n, &p)| p * self.inverse(n, t).powi(2))
            .sum()
    }

    fn precoder(&self, t: f64) -> CMatrix {
        let mut scaled = self.proj.clone();
        for n in 0..scaled.nrows() {
            let s = self.inverse(n, t);
            scaled.row_mut(n).scale_mut(s);
        }
        &self.basis * scaled
    }
}

/// Left side of the power equation `Σ_m Σ_n [Φ_m]_nn / ([Λ_m]_nn + t)²`,
/// built once per precoder update.
///
/// `A_m = Ψ_m + ηξI` is a rank-`K` update of a scaled identity, so only the
/// eigenpairs inside the span of the responses are computed: with the thin QR
/// `V_m = QR`, `Ψ_m = Q (R D R^H) Q^H`. Outside that span the eigenvalue is
/// `ηξ` and `Φ` vanishes, so those terms never contribute.
#[derive(Debug, Clone)]
pub struct PowerEquation {
    systems: Vec<SubcarrierSystem>,
}

impl PowerEquation {
    pub fn build(
        state: &FpState,
        stats: &ChannelStats,
        responses: &ResponseTable,
        inv_amp_eff: f64,
    ) -> Self {
        let k_total = responses.n_users();
        let shift = state.eta * inv_amp_eff;
        let systems = (0..responses.n_subcarriers())
            .map(|m| {
                let v = responses.subcarrier_matrix(m);
                let qr = v.qr();
                let q = qr.q();
                let r = qr.r();
                let mut d = vec![0.0; k_total];
                let mut coef = vec![Complex64::new(0.0, 0.0); k_total];
                for k in 0..k_total {
                    let g = stats.users[k].gamma;
                    let rho = state.rho[(k, m)];
                    d[k] = rho.norm_sqr() * g;
                    coef[k] = rho * ((1.0 + state.lambda[(k, m)]) * g).sqrt();
                }
                let mut rd = r.clone();
                let mut rc = r.clone();
                for k in 0..k_total {
                    rd.column_mut(k).scale_mut(d[k]);
                    let c = coef[k];
                    rc.column_mut(k).iter_mut().for_each(|z| *z *= c);
                }
                let reduced = &rd * r.adjoint();
                let reduced = (&reduced + reduced.adjoint()) * Complex64::new(0.5, 0.0);
                let eigen = reduced.symmetric_eigen();
                let s_max = eigen
                    .eigenvalues
                    .iter()
                    .fold(0.0f64, |a, &b| a.max(b.abs()));
                let eig: Vec<f64> = eigen
                    .eigenvalues
                    .iter()
                    .map(|&e| e.max(0.0) + shift)
                    .collect();
                let w = eigen.eigenvectors;
                let proj = w.adjoint() * rc;
                let phi = proj.row_iter().map(|row| row.norm_squared()).collect();
                SubcarrierSystem {
                    basis: q * w,
                    eig,
                    proj,
                    phi,
                    cutoff: 1e-12 * s_max.max(shift),
                }
            })
            .collect();
        PowerEquation { systems }
    }

    /// Transmit power `Σ ||b(t)||²`.
    pub fn eval(&self, t: f64) -> f64 {
        self.systems.iter().map(|s| s.power(t)).sum()
    }

    /// `Σ_m tr Φ_m`, an upper bound on `t² · eval(t)`.
    pub fn phi_trace(&self) -> f64 {
        self.systems.iter().flat_map(|s| s.phi.iter()).sum()
    }

    pub fn precoders(&self, t: f64) -> DigitalPrecoderSet {
        DigitalPrecoderSet {
            per_subcarrier: self.systems.iter().map(|s| s.precoder(t)).collect(),
        }
    }

    /// Smallest `t ≥ 0` with `eval(t) ≤ budget`, returned on the feasible side
    /// of a bisection interval of relative width `tol`.
    pub fn solve(&self, budget: f64, tol: f64) -> Result<f64> {
        let trace = self.phi_trace();
        if !trace.is_finite() {
            return Err(IsacError::Bracket(format!(
                "non-finite power equation ({trace})"
            )));
        }
        if self.eval(0.0) <= budget {
            return Ok(0.0);
        }
        // eval(t) ≤ tr Φ / t², so this end is always feasible.
        let mut hi = (trace / budget).sqrt();
        let mut lo = 0.0;
        let mut f_lo = f64::INFINITY;
        if !(hi > 0.0 && hi.is_finite()) || self.eval(hi) > budget * (1.0 + 1e-12) {
            return Err(IsacError::Bracket(format!("upper end {hi} is infeasible")));
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let f_mid = self.eval(mid);
            debug_assert!(f_mid <= f_lo, "power equation not decreasing at {mid}");
            if f_mid > budget {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
            if hi - lo <= tol * hi {
                break;
            }
        }
        Ok(hi)
    }
}

/// Result of a precoder update.
#[derive(Debug, Clone)]
pub struct PrecoderUpdate {
    pub precoders: DigitalPrecoderSet,
    /// Power multiplier `t`.
    pub multiplier: f64,
}

/// Closed-form precoder update
/// `b_k = (Ψ + (ηξ + t) I)^{-1} √((1+λ_k)γ_k) ρ_k v_k` with the smallest
/// feasible `t ≥ 0`. Where `Ψ + ηξI` is singular the pseudo-inverse is used.
pub fn update_precoders(
    state: &FpState,
    stats: &ChannelStats,
    responses: &ResponseTable,
    power_model: &PowerModel,
    options: &SolverOptions,
) -> Result<PrecoderUpdate> {
    let equation = PowerEquation::build(state, stats, responses, power_model.inv_amp_eff);
    let t = equation.solve(options.power_budget, options.bisection_tol)?;
    Ok(PrecoderUpdate {
        precoders: equation.precoders(t),
        multiplier: t,
    })
}

/// Matched-filter start `b_k[m] = √(P/(KM)) v_k[m]` using the full budget.
pub fn mrt_initialization(responses: &ResponseTable, power_budget: f64) -> DigitalPrecoderSet {
    let k = responses.n_users();
    let m = responses.n_subcarriers();
    let s = Complex64::new((power_budget / (k * m) as f64).sqrt(), 0.0);
    DigitalPrecoderSet {
        per_subcarrier: (0..m).map(|i| responses.subcarrier_matrix(i) * s).collect(),
    }
}

/// Sum of the per-link rate bounds, nats/s/Hz.
pub fn spectral_sum_rate(
    precoders: &DigitalPrecoderSet,
    stats: &ChannelStats,
    responses: &ResponseTable,
    noise: f64,
) -> f64 {
    rate_upper_bound(precoders, stats, responses, noise, 1.0).sum()
}

/// Dinkelbach subproblem objective `Σ R̄ − η P_total`.
pub fn dinkelbach_objective(
    precoders: &DigitalPrecoderSet,
    eta: f64,
    stats: &ChannelStats,
    responses: &ResponseTable,
    noise: f64,
    power_model: &PowerModel,
) -> f64 {
    spectral_sum_rate(precoders, stats, responses, noise)
        - eta * total_power(precoders, power_model)
}

/// Objective after the Lagrangian-dual transform, for given `λ`.
pub fn lagrangian_dual_objective(
    precoders: &DigitalPrecoderSet,
    lambda: &DMatrix<f64>,
    eta: f64,
    stats: &ChannelStats,
    responses: &ResponseTable,
    noise: f64,
    power_model: &PowerModel,
) -> f64 {
    let mut value = 0.0;
    for m in 0..responses.n_subcarriers() {
        let cross = cross_terms(precoders, responses, m);
        for k in 0..responses.n_users() {
            let g = stats.users[k].gamma;
            let l = lambda[(k, m)];
            let row_total: f64 = cross.row(k).iter().map(|z| z.norm_sqr()).sum();
            value +=
                l.ln_1p() - l + (1.0 + l) * g * cross[(k, k)].norm_sqr() / (g * row_total + noise);
        }
    }
    value - eta * total_power(precoders, power_model)
}

/// Objective after the quadratic transform, for given `λ` and `ρ`.
pub fn quadratic_transform_objective(
    state: &FpState,
    stats: &ChannelStats,
    responses: &ResponseTable,
    noise: f64,
    power_model: &PowerModel,
) -> f64 {
    let mut value = 0.0;
    for m in 0..responses.n_subcarriers() {
        let cross = cross_terms(&state.precoders, responses, m);
        for k in 0..responses.n_users() {
            let g = stats.users[k].gamma;
            let l = state.lambda[(k, m)];
            let rho = state.rho[(k, m)];
            let row_total: f64 = cross.row(k).iter().map(|z| z.norm_sqr()).sum();
            // b^H v ρ = conj(v^H b) ρ
            let align = (cross[(k, k)].conj() * rho).re;
            value += l.ln_1p() - l + 2.0 * ((1.0 + l) * g).sqrt() * align
                - rho.norm_sqr() * (g * row_total + noise);
        }
    }
    value - state.eta * total_power(&state.precoders, power_model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    IterationLimit,
}

/// One Dinkelbach iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub iteration: usize,
    /// Ratio after this iteration's update.
    pub eta: f64,
    /// `F(B⁽ⁱ⁾, η⁽ⁱ⁾)`.
    pub objective: f64,
    pub sum_rate: f64,
    pub transmit_power: f64,
    pub inner_iterations: usize,
    /// Subproblem objective at the warm start followed by its value after
    /// every `λ → ρ → b` cycle.
    pub inner_objectives: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DigitalSolution {
    pub precoders: DigitalPrecoderSet,
    /// Achieved `Σ R̄ / P_total` of `precoders`, nats/s/Hz/W.
    pub eta: f64,
    pub trace: Vec<OuterRecord>,
    pub status: SolveStatus,
}

impl DigitalSolution {
    pub fn outer_iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn inner_iterations(&self) -> usize {
        self.trace.iter().map(|r| r.inner_iterations).sum()
    }
}

fn check_inputs(
    stats: &ChannelStats,
    responses: &ResponseTable,
    noise: f64,
    init: &DigitalPrecoderSet,
) -> Result<()> {
    if !(noise > 0.0) {
        return Err(IsacError::invalid(
            "noise",
            format!("{noise} must be positive"),
        ));
    }
    if stats.len() != responses.n_users() {
        return Err(IsacError::shape(
            "channel statistics",
            format!("{} users", responses.n_users()),
            format!("{}", stats.len()),
        ));
    }
    if init.n_subcarriers() != responses.n_subcarriers() {
        return Err(IsacError::shape(
            "initial precoders",
            format!("{} subcarriers", responses.n_subcarriers()),
            format!("{}", init.n_subcarriers()),
        ));
    }
    let want = (responses.n_elements(), responses.n_users());
    if let Some(b) = init.per_subcarrier.iter().find(|b| b.shape() != want) {
        return Err(IsacError::shape(
            "initial precoders",
            format!("{want:?}"),
            format!("{:?}", b.shape()),
        ));
    }
    Ok(())
}

/// Runs the inner alternating loop at fixed `η`, starting from `precoders`.
fn solve_subproblem(
    precoders: DigitalPrecoderSet,
    eta: f64,
    stats: &ChannelStats,
    responses: &ResponseTable,
    noise: f64,
    power_model: &PowerModel,
    options: &SolverOptions,
) -> Result<(DigitalPrecoderSet, Vec<f64>, bool)> {
    let k_total = responses.n_users();
    let mut state = FpState::new(eta, precoders, k_total);
    let mut current =
        dinkelbach_objective(&state.precoders, eta, stats, responses, noise, power_model);
    let mut objectives = vec![current];
    let mut converged = false;
    for _ in 0..options.max_inner_iters {
        state.lambda = update_lambda(&state.precoders, stats, responses, noise);
        state.rho = update_rho(&state, stats, responses, noise);
        let update = update_precoders(&state, stats, responses, power_model, options)?;
        state.precoders = update.precoders;
        let next =
            dinkelbach_objective(&state.precoders, eta, stats, responses, noise, power_model);
        objectives.push(next);
        let rate = spectral_sum_rate(&state.precoders, stats, responses, noise);
        let scale = next.abs().max(rate).max(f64::MIN_POSITIVE);
        let change = (next - current).abs();
        current = next;
        if change <= options.inner_tol * scale {
            converged = true;
            break;
        }
    }
    Ok((state.precoders, objectives, converged))
}

/// Dinkelbach outer loop with warm-started inner solves.
///
/// `init` should use the full power budget; [`mrt_initialization`] does.
pub fn solve_fully_digital(
    stats: &ChannelStats,
    responses: &ResponseTable,
    noise: f64,
    power_model: &PowerModel,
    options: &SolverOptions,
    init: DigitalPrecoderSet,
) -> Result<DigitalSolution> {
    options.validate()?;
    power_model.validate()?;
    check_inputs(stats, responses, noise, &init)?;

    let mut eta = 0.0;
    let mut precoders = init;
    let mut trace = Vec::new();
    let mut status = SolveStatus::IterationLimit;
    for iteration in 0..options.max_outer_iters {
        let (next, inner_objectives, _) = solve_subproblem(
            precoders,
            eta,
            stats,
            responses,
            noise,
            power_model,
            options,
        )?;
        precoders = next;
        let rate = spectral_sum_rate(&precoders, stats, responses, noise);
        let consumed = total_power(&precoders, power_model);
        let objective = rate - eta * consumed;
        let new_eta = if consumed > 0.0 { rate / consumed } else { 0.0 };
        trace.push(OuterRecord {
            iteration,
            eta: new_eta,
            objective,
            sum_rate: rate,
            transmit_power: precoders.transmit_power(),
            inner_iterations: inner_objectives.len() - 1,
            inner_objectives,
        });
        eta = new_eta;
        if objective <= options.dinkelbach_tol * rate {
            status = SolveStatus::Converged;
            break;
        }
    }
    Ok(DigitalSolution {
        precoders,
        eta,
        trace,
        status,
    })
}
