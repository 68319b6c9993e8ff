//! Optimal-regularization rates and user-loading optimization.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::{asymptotic_siqnr, Scenario, CROSS_CHECK_TOLERANCE};
use crate::error::{invalid, Error, Result};
use crate::optimize::golden_section_max;
use crate::precoding::optimal_rho;

/// Distance kept from the ends of the admissible loading interval.
pub const BETA_SEARCH_MARGIN: f64 = 1e-4;
/// Width of the final golden-section bracket in `beta`.
pub const BETA_TOLERANCE: f64 = 1e-5;

/// Per-user performance under the optimal regularization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalRate {
    pub rho: f64,
    pub xi: f64,
    pub gamma: f64,
    /// Bits per channel use per user.
    pub rate: f64,
    pub sum_rate_per_antenna: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadingOptimum {
    pub beta: f64,
    pub sum_rate_per_antenna: f64,
    pub evaluations: usize,
}

/// SIQNR and rate at `rho*`, where the SIQNR collapses to
/// `(1 - rho_AD) xi / (1 + rho_AD xi)`.
///
/// The collapsed value is checked against the general SIQNR expression.
pub fn optimal_siqnr_and_rate(scenario: &Scenario) -> Result<OptimalRate> {
    scenario.validate()?;
    let rho = optimal_rho(scenario.beta, scenario.gamma0, scenario.rho_da)?;
    let general = asymptotic_siqnr(&scenario.at_rho(rho))?;
    let xi = general.xi;
    let rad = scenario.rho_ad;
    let gamma = (1.0 - rad) * xi / (1.0 + rad * xi);
    if (gamma - general.gamma).abs() > CROSS_CHECK_TOLERANCE * gamma.max(1e-300) {
        return Err(Error::NumericFault {
            context: "SIQNR at optimal regularization",
            detail: format!("collapsed form {gamma} vs general form {}", general.gamma),
        });
    }
    let rate = ((1.0 + xi) / (1.0 + rad * xi)).log2();
    Ok(OptimalRate {
        rho,
        xi,
        gamma,
        rate,
        sum_rate_per_antenna: scenario.beta * (1.0 - scenario.eta * scenario.beta) * rate,
    })
}

/// `beta (1 - eta beta) R` at `rho*`; nonpositive once `eta beta >= 1`.
pub fn sum_rate_per_antenna(scenario: &Scenario) -> Result<f64> {
    optimal_siqnr_and_rate(scenario).map(|r| r.sum_rate_per_antenna)
}

/// Maximize the sum rate per antenna over `beta` in
/// `(0, min(1, 1/eta))` by golden-section search.
pub fn optimal_beta_numeric(scenario: &Scenario) -> Result<LoadingOptimum> {
    Scenario { beta: 0.5, ..*scenario }.validate()?;
    let lo = BETA_SEARCH_MARGIN;
    let hi = (1.0f64).min(1.0 / scenario.eta) - BETA_SEARCH_MARGIN;
    if hi <= lo {
        return Err(invalid(
            "eta",
            format!("admissible loading interval is empty for eta = {}", scenario.eta),
        ));
    }
    let best = golden_section_max(|b| sum_rate_per_antenna(&scenario.with_beta(b)), lo, hi, BETA_TOLERANCE)?;
    Ok(LoadingOptimum {
        beta: best.arg,
        sum_rate_per_antenna: best.value,
        evaluations: best.evaluations,
    })
}

/// Low-SNR closed-form optimal loading,
/// `-k + sqrt(k^2 + k / eta)` with `k = gamma0 (1 + rho_AD)(1 - rho_DA)`.
pub fn optimal_beta_closed_form(gamma0: f64, rho_da: f64, rho_ad: f64, eta: f64) -> f64 {
    let k = gamma0 * (1.0 + rho_ad) * (1.0 - rho_da);
    // sqrt(k^2 + k/eta) - k without cancellation
    let s = k / eta;
    if s == 0.0 {
        return 0.0;
    }
    s / ((k * k + s).sqrt() + k)
}

/// Per-user rate from the first-order small-`gamma0` expansion of `xi*`.
pub fn low_snr_rate(beta: f64, gamma0: f64, rho_da: f64, rho_ad: f64) -> f64 {
    let g = (1.0 - rho_da) * gamma0;
    ((beta + g) / (beta + rho_ad * g)).log2()
}

/// Limit of the ADC-induced rate loss divided by `gamma0` as
/// `gamma0 -> 0`: `rho_AD (1 - rho_DA) / (beta ln 2)`.
pub fn rate_loss_per_energy(beta: f64, rho_da: f64, rho_ad: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(invalid("beta", format!("must be positive, got {beta}")));
    }
    Ok(rho_ad * (1.0 - rho_da) / (beta * LN_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::DISTORTION_TABLE;

    fn uncorrelated(rho_ad: f64) -> Scenario {
        Scenario {
            beta: 0.5,
            gamma0: 1.0,
            rho_da: DISTORTION_TABLE[0],
            rho_ad,
            nu: 0.0,
            eta: 1.0,
        }
    }

    #[test]
    fn ideal_adc_rate_is_log_one_plus_xi() {
        for nu in [0.0, 0.5] {
            let r = optimal_siqnr_and_rate(&Scenario {
                rho_ad: 0.0,
                nu,
                ..uncorrelated(0.0)
            })
            .unwrap();
            assert!((r.gamma - r.xi).abs() < 1e-12 * r.xi);
            assert!((r.rate - (1.0 + r.xi).log2()).abs() < 1e-12);
        }
    }

    #[test]
    fn correlated_collapse_passes_cross_check() {
        for nu in [0.2, 0.5, 0.8] {
            for rad in DISTORTION_TABLE {
                let s = Scenario {
                    nu,
                    ..uncorrelated(rad)
                };
                optimal_siqnr_and_rate(&s).unwrap();
            }
        }
    }

    #[test]
    fn sum_rate_vanishes_at_full_overhead() {
        let s = uncorrelated(DISTORTION_TABLE[2]).with_beta(1.0);
        assert!(sum_rate_per_antenna(&s).unwrap().abs() < 1e-15);
        let tiny = sum_rate_per_antenna(&s.with_beta(1e-8)).unwrap();
        assert!(tiny > 0.0 && tiny < 1e-6);
    }

    #[test]
    fn pentagram_loadings() {
        let expected = [0.2324, 0.2330, 0.2409, 0.2570, 0.2881];
        let rads = [
            0.0,
            DISTORTION_TABLE[4],
            DISTORTION_TABLE[2],
            DISTORTION_TABLE[1],
            DISTORTION_TABLE[0],
        ];
        let mut prev = 0.0;
        for (rad, want) in rads.into_iter().zip(expected) {
            let b = optimal_beta_numeric(&uncorrelated(rad)).unwrap().beta;
            assert!((b - want).abs() < 0.005, "rho_ad {rad}: {b} vs {want}");
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(optimal_beta_closed_form(0.0, 0.3634, 0.03454, 1.0), 0.0);
        let b = optimal_beta_closed_form(0.1, 0.3634, 0.03454, 1.0);
        assert!((b - 0.1991).abs() < 5e-5, "{b}");
        let k: f64 = 0.1 * 1.03454 * (1.0 - 0.3634);
        assert!((b - (-k + (k * k + k).sqrt())).abs() < 1e-15);
    }

    #[test]
    fn closed_form_ratio_tends_to_sqrt_two() {
        // The closed form keeps only the first-order term of ln(1 + x); the
        // exact low-SNR optimum is smaller by a factor approaching sqrt(2).
        let mut ratios = Vec::new();
        for db in [0.0, -5.0, -10.0, -15.0, -30.0] {
            let s = Scenario {
                gamma0: 10f64.powf(db / 10.0),
                ..uncorrelated(DISTORTION_TABLE[2])
            };
            let num = optimal_beta_numeric(&s).unwrap().beta;
            ratios.push(optimal_beta_closed_form(s.gamma0, s.rho_da, s.rho_ad, s.eta) / num);
        }
        assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
        assert!((ratios[4] - 2f64.sqrt()).abs() < 0.01, "{ratios:?}");
    }

    #[test]
    fn low_snr_rate_tracks_exact_rate() {
        let (rda, rad) = (DISTORTION_TABLE[0], DISTORTION_TABLE[2]);
        assert_eq!(low_snr_rate(0.5, 0.0, rda, rad), 0.0);
        let exact = optimal_siqnr_and_rate(&Scenario {
            gamma0: 0.01,
            ..uncorrelated(rad)
        })
        .unwrap()
        .rate;
        let approx = low_snr_rate(0.5, 0.01, rda, rad);
        assert!((approx - exact).abs() < 0.02 * exact);
    }

    #[test]
    fn rate_loss_limit() {
        let (rda, rad) = (DISTORTION_TABLE[0], DISTORTION_TABLE[2]);
        let l = rate_loss_per_energy(0.5, rda, rad).unwrap();
        assert!((l - 0.06345).abs() < 5e-5, "{l}");
        assert_eq!(rate_loss_per_energy(0.5, rda, 0.0).unwrap(), 0.0);
        let g = 1e-4;
        let q = (low_snr_rate(0.5, g, rda, 0.0) - low_snr_rate(0.5, g, rda, rad)) / g;
        assert!((q - l).abs() < 1e-3 * l);
        assert!(rate_loss_per_energy(0.0, rda, rad).is_err());
    }
}
