//! Large-system (deterministic-equivalent) analysis of RZF precoding with
//! quantized converters.
//!
//! As `N, M -> infinity` with `beta = M / N` fixed, every user's SIQNR under
//! RZF with `alpha = rho N` converges to a deterministic `gamma` that depends
//! on the channel correlation only through `xi`, `E12` and `E22`
//! ([`Moments`]). This module evaluates those quantities, the resulting
//! SIQNR / rate / sum rate, and the optimal user loading.

mod fixed_point;
mod loading;

use serde::{Deserialize, Serialize};

pub use fixed_point::{
    moments_spectrum, moments_uncorrelated, solve_xi_spectrum, solve_xi_toeplitz, xi_uncorrelated, Moments,
    XI_TOLERANCE,
};
pub use loading::{
    low_snr_rate, optimal_beta_closed_form, optimal_beta_numeric, optimal_siqnr_and_rate, rate_loss_per_energy,
    sum_rate_per_antenna, LoadingOptimum, OptimalRate, BETA_SEARCH_MARGIN, BETA_TOLERANCE,
};

use crate::error::{invalid, Error, Result};

/// Relative tolerance for internal cross-checks between equivalent formulas.
pub const CROSS_CHECK_TOLERANCE: f64 = 1e-9;

/// System operating point without the regularization choice.
///
/// `eta = N tau / T` folds the per-user pilot length `tau` and coherence
/// interval `T` into one overhead factor; the sum rate carries `1 - eta beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// User loading `M / N`.
    pub beta: f64,
    /// Linear SNR `P / sigma_n^2`.
    pub gamma0: f64,
    pub rho_da: f64,
    pub rho_ad: f64,
    /// Exponential correlation coefficient; 0 means uncorrelated.
    pub nu: f64,
    pub eta: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        if !(self.gamma0 > 0.0 && self.gamma0.is_finite()) {
            return Err(invalid("gamma0", format!("must be positive, got {}", self.gamma0)));
        }
        for (name, v) in [("rho_da", self.rho_da), ("rho_ad", self.rho_ad), ("nu", self.nu)] {
            if !(0.0..1.0).contains(&v) {
                return Err(invalid(name, format!("must lie in [0, 1), got {v}")));
            }
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta", format!("must be positive, got {}", self.eta)));
        }
        Ok(())
    }

    pub fn at_rho(self, rho: f64) -> AsymptoticPoint {
        AsymptoticPoint { scenario: self, rho }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }

    /// Large-`N` moments at regularization `rho`.
    pub fn moments(&self, rho: f64) -> Result<Moments> {
        if self.nu == 0.0 {
            moments_uncorrelated(rho, self.beta)
        } else {
            solve_xi_toeplitz(rho, self.beta, self.nu)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticPoint {
    pub scenario: Scenario,
    /// Normalized regularization `alpha / N`.
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSolution {
    pub xi: f64,
    pub e12: f64,
    pub e22: f64,
    /// Asymptotic SIQNR.
    pub gamma: f64,
    /// `log2(1 + gamma)` bits per channel use.
    pub rate: f64,
    /// `beta (1 - eta beta) rate`.
    pub sum_rate_per_antenna: f64,
}

/// Asymptotic SIQNR from precomputed moments.
pub fn siqnr_from_moments(point: &AsymptoticPoint, m: &Moments) -> f64 {
    let s = &point.scenario;
    let (rda, rad, g0) = (s.rho_da, s.rho_ad, s.gamma0);
    let q = (1.0 + m.xi).powi(2) * m.e12;
    let t = m.xi * (m.e22 + point.rho / s.beta * q);
    let num = (1.0 - rad) * (1.0 - rda) * t * g0;
    let den = rad * (1.0 - rda) * t * g0 + rda * q * g0 + (1.0 - rda) * m.e22 * g0 + q;
    num / den
}

/// Uncorrelated-channel form of the asymptotic SIQNR, with the common
/// `E12 = E22` factor cancelled.
pub fn siqnr_uncorrelated(point: &AsymptoticPoint, xi: f64) -> f64 {
    let s = &point.scenario;
    let (rda, rad, g0) = (s.rho_da, s.rho_ad, s.gamma0);
    let q = (1.0 + xi).powi(2);
    let t = xi * (1.0 + point.rho / s.beta * q);
    let num = (1.0 - rad) * (1.0 - rda) * t * g0;
    let den = rad * (1.0 - rda) * t * g0 + rda * q * g0 + (1.0 - rda) * g0 + q;
    num / den
}

fn solution(point: &AsymptoticPoint, m: Moments, gamma: f64) -> AsymptoticSolution {
    let s = &point.scenario;
    let rate = (1.0 + gamma).log2();
    AsymptoticSolution {
        xi: m.xi,
        e12: m.e12,
        e22: m.e22,
        gamma,
        rate,
        sum_rate_per_antenna: s.beta * (1.0 - s.eta * s.beta) * rate,
    }
}

/// Asymptotic SIQNR of RZF at `point`.
///
/// Uses the Toeplitz closed forms for `nu > 0`; for `nu = 0` the
/// uncorrelated closed form is used and cross-checked against the
/// simplified uncorrelated SIQNR expression.
pub fn asymptotic_siqnr(point: &AsymptoticPoint) -> Result<AsymptoticSolution> {
    point.scenario.validate()?;
    let m = point.scenario.moments(point.rho)?;
    let gamma = siqnr_from_moments(point, &m);
    if point.scenario.nu == 0.0 {
        let alt = siqnr_uncorrelated(point, m.xi);
        if (gamma - alt).abs() > CROSS_CHECK_TOLERANCE * gamma.abs().max(1e-300) {
            return Err(Error::NumericFault {
                context: "uncorrelated SIQNR cross-check",
                detail: format!("general form {gamma} vs uncorrelated form {alt}"),
            });
        }
    }
    Ok(solution(point, m, gamma))
}

/// Asymptotic SIQNR for an arbitrary correlation spectrum (eigenvalues of a
/// trace-normalized `R`).
pub fn asymptotic_siqnr_spectrum(point: &AsymptoticPoint, spectrum: &[f64]) -> Result<AsymptoticSolution> {
    point.scenario.validate()?;
    let m = moments_spectrum(point.rho, point.scenario.beta, spectrum)?;
    Ok(solution(point, m, siqnr_from_moments(point, &m)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precoding::optimal_rho;

    fn high_snr(nu: f64) -> Scenario {
        Scenario {
            beta: 0.5,
            gamma0: 10f64.powf(1.5),
            rho_da: 0.3634,
            rho_ad: 0.03454,
            nu,
            eta: 1.0,
        }
    }

    #[test]
    fn distortion_free_conventional_rho_gives_xi() {
        let s = Scenario {
            beta: 0.5,
            gamma0: 10.0,
            rho_da: 0.0,
            rho_ad: 0.0,
            nu: 0.0,
            eta: 1.0,
        };
        let sol = asymptotic_siqnr(&s.at_rho(0.05)).unwrap();
        assert!((sol.gamma - sol.xi).abs() < 1e-10 * sol.xi);
    }

    #[test]
    fn gamma_decreases_with_each_distortion() {
        let grid: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        for nu in [0.0, 0.5] {
            let base = high_snr(nu);
            let by_da: Vec<f64> = grid
                .iter()
                .map(|&r| {
                    asymptotic_siqnr(&Scenario { rho_da: r, ..base }.at_rho(0.3))
                        .unwrap()
                        .gamma
                })
                .collect();
            let by_ad: Vec<f64> = grid
                .iter()
                .map(|&r| {
                    asymptotic_siqnr(&Scenario { rho_ad: r, ..base }.at_rho(0.3))
                        .unwrap()
                        .gamma
                })
                .collect();
            assert!(by_da.windows(2).all(|w| w[1] < w[0]), "{by_da:?}");
            assert!(by_ad.windows(2).all(|w| w[1] < w[0]), "{by_ad:?}");
        }
    }

    #[test]
    fn grid_argmax_near_rho_star() {
        let rho_star = optimal_rho(0.5, 10f64.powf(1.5), 0.3634).unwrap();
        let grid = crate::optimize::log_space(1e-2, 10.0, 200);
        let step = (grid[1] / grid[0]).ln();
        for nu in [0.2, 0.5, 0.8] {
            let s = high_snr(nu);
            let g: Vec<f64> = grid
                .iter()
                .map(|&r| asymptotic_siqnr(&s.at_rho(r)).unwrap().gamma)
                .collect();
            let best = grid[crate::optimize::argmax(&g).unwrap()];
            assert!(
                (best.ln() - rho_star.ln()).abs() <= step,
                "nu {nu}: {best} vs {rho_star}"
            );
        }
    }

    #[test]
    fn spectrum_path_agrees_on_flat_spectrum() {
        let p = high_snr(0.0).at_rho(0.4);
        let a = asymptotic_siqnr(&p).unwrap();
        let b = asymptotic_siqnr_spectrum(&p, &[1.0; 16]).unwrap();
        assert!((a.gamma - b.gamma).abs() < 1e-10 * a.gamma);
    }

    #[test]
    fn validation() {
        let bad = Scenario {
            nu: 1.0,
            ..high_snr(0.0)
        };
        assert!(asymptotic_siqnr(&bad.at_rho(0.3)).is_err());
        let bad = Scenario {
            gamma0: 0.0,
            ..high_snr(0.0)
        };
        assert!(bad.validate().is_err());
    }
}
