//! Linear downlink precoders and per-realization SIQNR.
//!
//! RZF is `P = c (H^H H + alpha I)^-1 H^H`, evaluated through the equivalent
//! `c H^H (H H^H + alpha I)^-1` so that only an `M x M` Hermitian system is
//! factored. Every precoder is scaled so that `Tr(P P^H)` equals the power
//! budget.

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;

/// Pivot ratio below which the ZF Gram matrix is treated as singular.
const SINGULAR_PIVOT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PrecoderKind {
    /// Regularized zero-forcing with unnormalized regularization `alpha`.
    Rzf { alpha: f64 },
    /// The `alpha -> 0` limit.
    Zf,
    /// The `alpha -> infinity` limit (matched filter).
    Mrc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecoderSpec {
    pub kind: PrecoderKind,
    /// Transmit power budget `P`.
    pub power_budget: f64,
}

impl PrecoderSpec {
    /// RZF with normalized regularization `rho = alpha / N`.
    pub fn rzf_normalized(rho: f64, n_antennas: usize, power_budget: f64) -> Self {
        Self {
            kind: PrecoderKind::Rzf {
                alpha: rho * n_antennas as f64,
            },
            power_budget,
        }
    }
}

/// A precoder bound to the channel it was designed for.
#[derive(Debug, Clone)]
pub struct PrecodedSystem<'a> {
    /// `N x M` precoding matrix.
    pub p: DMatrix<Complex64>,
    /// Power normalization constant.
    pub c: f64,
    pub channel: &'a DMatrix<Complex64>,
}

impl PrecodedSystem<'_> {
    /// `diag(P P^H)`, the per-antenna transmit power.
    pub fn p_diag(&self) -> Vec<f64> {
        linalg::row_energies(&self.p)
    }

    /// `H P` (`M x M`); entry `(k, j)` is `h_k^T p_j`.
    pub fn effective_channel(&self) -> DMatrix<Complex64> {
        linalg::mul(self.channel, &self.p)
    }

    pub fn total_power(&self) -> f64 {
        self.p.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Build and power-normalize the precoder for channel `h` (`M x N`).
pub fn build_precoder<'a>(h: &'a DMatrix<Complex64>, spec: &PrecoderSpec) -> Result<PrecodedSystem<'a>> {
    if !(spec.power_budget > 0.0) {
        return Err(invalid(
            "power_budget",
            format!("must be positive, got {}", spec.power_budget),
        ));
    }
    let unscaled = match spec.kind {
        PrecoderKind::Rzf { alpha } => {
            if !(alpha > 0.0) {
                return Err(invalid(
                    "alpha",
                    format!("RZF regularization must be positive, got {alpha}"),
                ));
            }
            regularized_inverse(h, alpha)?
        }
        PrecoderKind::Zf => regularized_inverse(h, 0.0)?,
        PrecoderKind::Mrc => h.adjoint(),
    };
    let energy: f64 = unscaled.iter().map(|z| z.norm_sqr()).sum();
    if !(energy > 0.0) {
        return Err(Error::NumericFault {
            context: "precoder normalization",
            detail: "precoder has zero energy".into(),
        });
    }
    let c = (spec.power_budget / energy).sqrt();
    Ok(PrecodedSystem {
        p: unscaled * Complex64::new(c, 0.0),
        c,
        channel: h,
    })
}

/// `H^H (H H^H + alpha I)^-1` via a Cholesky solve.
fn regularized_inverse(h: &DMatrix<Complex64>, alpha: f64) -> Result<DMatrix<Complex64>> {
    let m = h.nrows();
    let mut g = linalg::gram(h);
    for i in 0..m {
        g[(i, i)] += alpha;
    }
    let scale = (0..m).map(|i| g[(i, i)].re).fold(0.0, f64::max);
    let chol: Cholesky<Complex64, Dyn> = Cholesky::new(g).ok_or(Error::Singular)?;
    if alpha == 0.0 {
        let min_pivot = (0..m)
            .map(|i| chol.l_dirty()[(i, i)].re.powi(2))
            .fold(f64::INFINITY, f64::min);
        if min_pivot < SINGULAR_PIVOT * scale {
            return Err(Error::Singular);
        }
    }
    // X = (H H^H + alpha I)^-1 H, and H^H (.)^-1 = X^H by Hermitian symmetry.
    let x = chol.solve(h);
    Ok(x.adjoint())
}

/// Closed-form SIQNR-maximizing normalized regularization
/// `rho* = (rho_da gamma0 + 1) beta / ((1 - rho_da) gamma0)`.
///
/// `gamma0` is the linear SNR `P / sigma_n^2`; the matching RZF parameter is
/// `alpha = rho* N`.
pub fn optimal_rho(beta: f64, gamma0: f64, rho_da: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(invalid("beta", format!("must be positive, got {beta}")));
    }
    if !(gamma0 > 0.0) {
        return Err(invalid("gamma0", format!("must be positive, got {gamma0}")));
    }
    if !(0.0..1.0).contains(&rho_da) {
        return Err(invalid("rho_da", format!("must lie in [0, 1), got {rho_da}")));
    }
    Ok((rho_da * gamma0 + 1.0) * beta / ((1.0 - rho_da) * gamma0))
}

/// The conventional choice `rho = beta / gamma0`.
pub fn conventional_rho(beta: f64, gamma0: f64) -> f64 {
    beta / gamma0
}

/// Received power decomposition for one user, before converter scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserPowers {
    /// `|h_k^T p_k|^2`
    pub signal: f64,
    /// `sum_{j != k} |h_k^T p_j|^2`
    pub interference: f64,
    /// `h_k^T diag(P P^H) h_k^*`; multiply by `rho_da` for the DAC noise power.
    pub spread: f64,
}

impl UserPowers {
    /// `E|y_k|^2` at the ADC input under the DAC surrogate.
    pub fn adc_input_power(&self, rho_da: f64, noise_var: f64) -> f64 {
        (1.0 - rho_da) * (self.signal + self.interference) + rho_da * self.spread + noise_var
    }

    /// SIQNR with both converters replaced by their Bussgang surrogates.
    pub fn siqnr(&self, rho_da: f64, rho_ad: f64, noise_var: f64) -> f64 {
        let g = (1.0 - rho_ad) * (1.0 - rho_ad);
        let num = g * (1.0 - rho_da) * self.signal;
        let den = g * (1.0 - rho_da) * self.interference
            + g * rho_da * self.spread
            + rho_ad * (1.0 - rho_ad) * self.adc_input_power(rho_da, noise_var)
            + g * noise_var;
        num / den
    }
}

/// Per-user power terms for a precoded channel.
pub fn user_powers(system: &PrecodedSystem<'_>) -> Vec<UserPowers> {
    let hp = system.effective_channel();
    let d = system.p_diag();
    let h = system.channel;
    (0..h.nrows())
        .map(|k| {
            let total: f64 = hp.row(k).iter().map(|z| z.norm_sqr()).sum();
            let signal = hp[(k, k)].norm_sqr();
            let spread: f64 = h.row(k).iter().zip(&d).map(|(z, di)| z.norm_sqr() * di).sum();
            UserPowers {
                signal,
                interference: (total - signal).max(0.0),
                spread,
            }
        })
        .collect()
}

/// Per-user SIQNR of a concrete realization, with the DAC and ADC
/// distortion powers substituted from their Bussgang covariances.
pub fn exact_siqnr(system: &PrecodedSystem<'_>, rho_da: f64, rho_ad: f64, noise_var: f64) -> Vec<f64> {
    user_powers(system)
        .iter()
        .map(|u| u.siqnr(rho_da, rho_ad, noise_var))
        .collect()
}
