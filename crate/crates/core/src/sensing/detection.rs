//! Chi-squared detection statistics for the multi-target detector.
//!
//! The regularized incomplete gamma functions come from `statrs`; the
//! quantile (bisection) and the noncentral survival series are built here.

use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::{IsacError, Result};

const QUANTILE_MAX_ITERS: usize = 400;

/// Poisson weights whose individual mass falls below this fraction of the
/// modal weight are dropped; the discarded tail mass stays below 1e-12.
const SERIES_CUTOFF: f64 = 1e-16;

/// Survival function of the central chi-squared distribution.
pub fn chi2_sf(dof: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(dof / 2.0, x / 2.0)
    }
}

pub fn chi2_cdf(dof: f64, x: f64) -> f64 {
    1.0 - chi2_sf(dof, x)
}

/// Point `x` with `P(X > x) = tail` for a central chi-squared variable, found
/// by bisection on the (strictly decreasing) survival function.
///
/// Works on the upper tail directly so that tiny false-alarm probabilities
/// keep full relative precision.
pub fn chi2_upper_quantile(dof: f64, tail: f64) -> Result<f64> {
    if !(tail > 0.0 && tail <= 1.0) {
        return Err(IsacError::invalid(
            "tail probability",
            format!("{tail} outside (0, 1]"),
        ));
    }
    if !(dof > 0.0) {
        return Err(IsacError::invalid(
            "degrees of freedom",
            format!("{dof} must be positive"),
        ));
    }
    if tail == 1.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = dof.max(1.0);
    while chi2_sf(dof, hi) > tail {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..QUANTILE_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if chi2_sf(dof, mid) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Central chi-squared quantile `F^{-1}(p)`.
pub fn chi2_quantile(dof: f64, p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(IsacError::invalid(
            "probability",
            format!("{p} outside [0, 1)"),
        ));
    }
    chi2_upper_quantile(dof, 1.0 - p)
}

fn poisson_ln_pmf(j: usize, mean: f64) -> f64 {
    -mean + j as f64 * mean.ln() - ln_gamma(j as f64 + 1.0)
}

/// Poisson(`nc/2`)-weighted sum of `term(dof + 2j)`, summed outward from the
/// Poisson mode.
fn poisson_mixture(dof: f64, nc: f64, term: impl Fn(f64) -> f64) -> f64 {
    let mean = nc / 2.0;
    let mode = mean.floor() as usize;
    let w_mode = poisson_ln_pmf(mode, mean).exp();
    let mut total = w_mode * term(dof + 2.0 * mode as f64);
    let mut j = mode;
    while j > 0 {
        j -= 1;
        let w = poisson_ln_pmf(j, mean).exp();
        total += w * term(dof + 2.0 * j as f64);
        if w < SERIES_CUTOFF * w_mode {
            break;
        }
    }
    let mut j = mode;
    loop {
        j += 1;
        let w = poisson_ln_pmf(j, mean).exp();
        total += w * term(dof + 2.0 * j as f64);
        if w < SERIES_CUTOFF * w_mode {
            break;
        }
    }
    total.clamp(0.0, 1.0)
}

/// Survival function of the noncentral chi-squared distribution as a
/// Poisson mixture of central survival functions; near one, the
/// complementary mixture of lower incomplete gammas is summed instead.
pub fn noncentral_chi2_sf(dof: f64, nc: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if nc <= 0.0 {
        return chi2_sf(dof, x);
    }
    let lower = poisson_mixture(dof, nc, |k| gamma_lr(k / 2.0, x / 2.0));
    if lower < 0.5 {
        1.0 - lower
    } else {
        poisson_mixture(dof, nc, |k| gamma_ur(k / 2.0, x / 2.0))
    }
}

pub fn noncentral_chi2_cdf(dof: f64, nc: f64, x: f64) -> f64 {
    1.0 - noncentral_chi2_sf(dof, nc, x)
}

/// Detection probability of `n_targets` targets at false-alarm rate `p_fa`:
/// `1 - F_{χ²_{2P}(ς)}(F^{-1}_{χ²_{2P}}(1 - P_FA))`.
pub fn detection_probability(noncentrality: f64, n_targets: usize, p_fa: f64) -> Result<f64> {
    if !(p_fa > 0.0 && p_fa <= 1.0) {
        return Err(IsacError::invalid("p_fa", format!("{p_fa} outside (0, 1]")));
    }
    if n_targets == 0 {
        return Err(IsacError::invalid("n_targets", "need at least one target"));
    }
    if !(noncentrality >= 0.0) {
        return Err(IsacError::invalid(
            "noncentrality",
            format!("{noncentrality} must be >= 0"),
        ));
    }
    let dof = 2.0 * n_targets as f64;
    let threshold = chi2_upper_quantile(dof, p_fa)?;
    Ok(noncentral_chi2_sf(dof, noncentrality, threshold))
}

/// Smallest noncentrality reaching detection probability `target`, by
/// bisection (detection probability is increasing in the noncentrality).
pub fn required_noncentrality(target: f64, n_targets: usize, p_fa: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(IsacError::invalid(
            "target P_D",
            format!("{target} outside (0, 1)"),
        ));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while detection_probability(hi, n_targets, p_fa)? < target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if detection_probability(mid, n_targets, p_fa)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn quantile_agrees_with_reference_inverse() {
        for dof in [2.0, 4.0, 8.0, 13.0] {
            for p in [0.01, 0.5, 0.9, 0.999] {
                let ours = chi2_quantile(dof, p).unwrap();
                let reference = ChiSquared::new(dof).unwrap().inverse_cdf(p);
                assert!(
                    (ours - reference).abs() < 1e-6 * reference.max(1.0),
                    "{dof} {p}: {ours} vs {reference}"
                );
                assert!((chi2_cdf(dof, ours) - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tiny_tail_quantile_has_relative_precision() {
        let x = chi2_upper_quantile(8.0, 1e-7).unwrap();
        assert!((chi2_sf(8.0, x) / 1e-7 - 1.0).abs() < 1e-9);
        // Two degrees of freedom have the closed form -2 ln(tail).
        let x2 = chi2_upper_quantile(2.0, 1e-7).unwrap();
        assert!((x2 + 2.0 * 1e-7f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn false_alarm_of_one_detects_everything() {
        assert_eq!(detection_probability(0.0, 4, 1.0).unwrap(), 1.0);
        assert_eq!(detection_probability(3.0, 2, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn zero_noncentrality_gives_false_alarm_rate() {
        for pr in 1..6 {
            for p_fa in [1e-7, 1e-3, 0.2] {
                let pd = detection_probability(0.0, pr, p_fa).unwrap();
                assert!((pd - p_fa).abs() < 1e-10, "{pr} {p_fa}: {pd}");
            }
        }
    }

    #[test]
    fn rejects_bad_false_alarm() {
        assert!(detection_probability(1.0, 2, 0.0).is_err());
        assert!(detection_probability(1.0, 2, 1.5).is_err());
        assert!(detection_probability(-1.0, 2, 0.1).is_err());
    }

    #[test]
    fn monotone_in_noncentrality_and_targets() {
        let grid: Vec<f64> = (0..60).map(|i| i as f64 * 2.0).collect();
        for pr in 1..=5 {
            let pd: Vec<f64> = grid
                .iter()
                .map(|&nc| detection_probability(nc, pr, 1e-7).unwrap())
                .collect();
            assert!(pd.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        }
        for &nc in &grid {
            let pd: Vec<f64> = (1..=6)
                .map(|pr| detection_probability(nc, pr, 1e-4).unwrap())
                .collect();
            assert!(
                pd.windows(2).all(|w| w[1] <= w[0] + 1e-15),
                "nc {nc}: {pd:?}"
            );
        }
    }

    #[test]
    fn monotone_where_detection_saturates() {
        let pd: Vec<f64> = (0..2000)
            .map(|i| detection_probability(100.0 + i as f64 * 0.1, 4, 1e-7).unwrap())
            .collect();
        assert!(pd.windows(2).all(|w| w[1] >= w[0]));
        assert!(pd[pd.len() - 1] > 1.0 - 1e-15);
    }

    #[test]
    fn noncentral_sf_two_dof_zero_threshold_edge() {
        assert_eq!(noncentral_chi2_sf(4.0, 3.0, 0.0), 1.0);
        assert!((noncentral_chi2_cdf(4.0, 0.0, 5.0) - chi2_cdf(4.0, 5.0)).abs() < 1e-15);
    }

    #[test]
    fn noncentral_sf_matches_sampling() {
        // Sampling oracle: sum of squared shifted Gaussians.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dof = 6usize;
        let nc: f64 = 9.0;
        let x = 14.0;
        let n = 400_000;
        let hits = (0..n)
            .filter(|_| {
                let mut s = 0.0;
                for i in 0..dof {
                    let z: f64 = rng.sample(StandardNormal);
                    let z = if i == 0 { z + nc.sqrt() } else { z };
                    s += z * z;
                }
                s > x
            })
            .count();
        let empirical = hits as f64 / n as f64;
        let exact = noncentral_chi2_sf(dof as f64, nc, x);
        assert!((empirical - exact).abs() < 0.005, "{empirical} vs {exact}");
    }

    #[test]
    fn required_noncentrality_hits_target() {
        let nc = required_noncentrality(0.9, 4, 1e-7).unwrap();
        let pd = detection_probability(nc, 4, 1e-7).unwrap();
        assert!((pd - 0.9).abs() < 1e-9);
    }
}
