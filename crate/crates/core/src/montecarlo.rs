//! Finite-size Monte-Carlo simulation: per-realization SIQNR against its
//! large-system limit, QPSK bit error rate, and convergence diagnostics.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{asymptotic_siqnr, AsymptoticSolution, Scenario};
use crate::channel::{sample_channel, ChannelRealization, CorrelationModel};
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::precoding::{
    build_precoder, exact_siqnr, optimal_rho, user_powers, PrecodedSystem, PrecoderKind, PrecoderSpec,
};
use crate::quant::{bussgang_adc, bussgang_dac, lloyd_max_codebook, quantize_hard, QuantizerModel, Resolution};
use crate::rng::{complex_normal, stream};
use crate::units::db_to_linear;

/// Fresh channel draws allowed per trial when ZF meets a singular channel.
pub const RESAMPLE_CAP: usize = 10;
/// Pilot symbols per realization used for the receiver gain estimate.
pub const PILOT_SYMBOLS: usize = 100;
/// Regularization standing in for the ZF limit in asymptotic references.
pub const ZF_REFERENCE_RHO: f64 = 1e-7;
/// Regularization standing in for the MRC limit in asymptotic references.
pub const MRC_REFERENCE_RHO: f64 = 1e6;

/// How the precoder is chosen for each realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoPolicy {
    /// RZF at the SIQNR-optimal `rho*`.
    Optimal,
    /// RZF at `rho = beta / gamma0`.
    Conventional,
    Zf,
    Mrc,
    /// RZF at a given normalized regularization.
    Fixed(f64),
}

/// A finite-size downlink scenario. Noise power is 1, so the power budget
/// equals the linear SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_antennas: usize,
    pub n_users: usize,
    pub gamma0_db: f64,
    pub b_da: Resolution,
    pub b_ad: Resolution,
    #[serde(default)]
    pub nu: f64,
    pub precoder: RhoPolicy,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_eta() -> f64 {
    1.0
}

impl SystemConfig {
    /// Optimal-RZF config with 1-bit DACs, 3-bit ADCs, no correlation and
    /// 500 trials.
    pub fn new(n_antennas: usize, n_users: usize, gamma0_db: f64) -> Self {
        Self {
            n_antennas,
            n_users,
            gamma0_db,
            b_da: Resolution::Bits(1),
            b_ad: Resolution::Bits(3),
            nu: 0.0,
            precoder: RhoPolicy::Optimal,
            trials: 500,
            seed: 0,
            eta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_antennas == 0 {
            return Err(invalid("n_users", "need at least one antenna and one user"));
        }
        if self.n_users > self.n_antennas {
            return Err(invalid(
                "n_users",
                format!("{} users exceed {} antennas", self.n_users, self.n_antennas),
            ));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "need at least one trial"));
        }
        if !self.gamma0_db.is_finite() {
            return Err(invalid("gamma0_db", format!("must be finite, got {}", self.gamma0_db)));
        }
        if let RhoPolicy::Fixed(r) = self.precoder {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("precoder", format!("fixed rho must be positive, got {r}")));
            }
        }
        self.b_da.distortion()?;
        self.b_ad.distortion()?;
        self.scenario()?.validate()
    }

    pub fn gamma0(&self) -> f64 {
        db_to_linear(self.gamma0_db)
    }

    pub fn beta(&self) -> f64 {
        self.n_users as f64 / self.n_antennas as f64
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Ok(Scenario {
            beta: self.beta(),
            gamma0: self.gamma0(),
            rho_da: self.b_da.distortion()?,
            rho_ad: self.b_ad.distortion()?,
            nu: self.nu,
            eta: self.eta,
        })
    }

    /// Normalized regularization for the RZF policies.
    pub fn rho(&self) -> Result<Option<f64>> {
        let s = self.scenario()?;
        Ok(match self.precoder {
            RhoPolicy::Optimal => Some(optimal_rho(s.beta, s.gamma0, s.rho_da)?),
            RhoPolicy::Conventional => Some(s.beta / s.gamma0),
            RhoPolicy::Fixed(r) => Some(r),
            RhoPolicy::Zf | RhoPolicy::Mrc => None,
        })
    }

    pub fn precoder_spec(&self) -> Result<PrecoderSpec> {
        let power_budget = self.gamma0();
        Ok(match (self.precoder, self.rho()?) {
            (RhoPolicy::Zf, _) => PrecoderSpec {
                kind: PrecoderKind::Zf,
                power_budget,
            },
            (RhoPolicy::Mrc, _) => PrecoderSpec {
                kind: PrecoderKind::Mrc,
                power_budget,
            },
            (_, Some(rho)) => PrecoderSpec::rzf_normalized(rho, self.n_antennas, power_budget),
            (_, None) => unreachable!("RZF policies always define rho"),
        })
    }

    /// Large-system SIQNR for the same parameters. ZF and MRC are taken as
    /// RZF at a vanishing and a very large regularization.
    pub fn asymptotic_reference(&self) -> Result<AsymptoticSolution> {
        let rho = match self.precoder {
            RhoPolicy::Zf => ZF_REFERENCE_RHO,
            RhoPolicy::Mrc => MRC_REFERENCE_RHO,
            _ => self.rho()?.expect("RZF policy"),
        };
        asymptotic_siqnr(&self.scenario()?.at_rho(rho))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Lloyd-Max quantization of the actual samples.
    Hard,
    /// Bussgang surrogates with Gaussian distortion.
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerEstimate {
    pub ber: f64,
    /// Binomial standard error `sqrt(p (1 - p) / bits)`.
    pub std_err: f64,
    pub bit_errors: u64,
    pub bits: u64,
    pub backend: Backend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub trials: usize,
    /// SIQNR averaged over users and realizations.
    pub mean_siqnr: f64,
    pub siqnr_std_err: f64,
    /// `log2(1 + gamma_k)` averaged over users and realizations.
    pub mean_rate: f64,
    pub rate_std_err: f64,
    pub ber: Option<BerEstimate>,
    pub asymptotic_reference: AsymptoticSolution,
    /// `|mean_siqnr - gamma| / gamma`.
    pub relative_gap: f64,
    /// Channel draws discarded because the precoder was singular.
    pub resampled_draws: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct TrialOutcome {
    siqnr: f64,
    rate: f64,
    bit_errors: u64,
    bits: u64,
    resampled: usize,
}

/// Draw a channel and precoder, resampling singular draws, and run `f`.
fn with_precoded<R, T, F>(
    corr: &CorrelationModel,
    config: &SystemConfig,
    spec: &PrecoderSpec,
    rng: &mut R,
    mut f: F,
) -> Result<(T, usize)>
where
    R: Rng,
    F: FnMut(&ChannelRealization, &PrecodedSystem<'_>, &mut R) -> Result<T>,
{
    for attempt in 0..=RESAMPLE_CAP {
        let ch = sample_channel(corr, config.n_users, rng)?;
        match build_precoder(&ch.h, spec) {
            Ok(sys) => return f(&ch, &sys, rng).map(|v| (v, attempt)),
            Err(Error::Singular) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Singular)
}

fn siqnr_summary(sys: &PrecodedSystem<'_>, rho_da: f64, rho_ad: f64) -> (f64, f64) {
    let g = exact_siqnr(sys, rho_da, rho_ad, 1.0);
    let m = g.len() as f64;
    let siqnr = g.iter().sum::<f64>() / m;
    let rate = g.iter().map(|x| (1.0 + x).log2()).sum::<f64>() / m;
    (siqnr, rate)
}

fn mean_and_std_err(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = v.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn run_trials<F>(config: &SystemConfig, trial: F) -> Result<Vec<TrialOutcome>>
where
    F: Fn(&CorrelationModel, &mut crate::rng::Stream) -> Result<TrialOutcome> + Sync,
{
    config.validate()?;
    let corr = CorrelationModel::new(config.n_antennas, config.nu)?;
    corr.sqrt_matrix();
    (0..config.trials as u64)
        .into_par_iter()
        .map(|t| trial(&corr, &mut stream(config.seed, t)))
        .collect()
}

fn report(config: &SystemConfig, outcomes: &[TrialOutcome], ber: Option<BerEstimate>) -> Result<MonteCarloReport> {
    let reference = config.asymptotic_reference()?;
    let (mean_siqnr, siqnr_std_err) = mean_and_std_err(outcomes.iter().map(|o| o.siqnr));
    let (mean_rate, rate_std_err) = mean_and_std_err(outcomes.iter().map(|o| o.rate));
    Ok(MonteCarloReport {
        trials: outcomes.len(),
        mean_siqnr,
        siqnr_std_err,
        mean_rate,
        rate_std_err,
        ber,
        relative_gap: (mean_siqnr - reference.gamma).abs() / reference.gamma,
        asymptotic_reference: reference,
        resampled_draws: outcomes.iter().map(|o| o.resampled).sum(),
    })
}

/// Average the per-realization SIQNR of the configured precoder and compare
/// it with its large-system limit.
///
/// Trial `t` draws from stream `t` of `config.seed`, so the report is
/// bit-identical for a given config regardless of thread count. The standard
/// error is taken over the per-trial user averages.
pub fn simulate_siqnr(config: &SystemConfig) -> Result<MonteCarloReport> {
    let spec = config.precoder_spec()?;
    let s = config.scenario()?;
    let outcomes = run_trials(config, |corr, rng| {
        let ((siqnr, rate), resampled) = with_precoded(corr, config, &spec, rng, |_, sys, _| {
            Ok(siqnr_summary(sys, s.rho_da, s.rho_ad))
        })?;
        Ok(TrialOutcome {
            siqnr,
            rate,
            resampled,
            ..Default::default()
        })
    })?;
    report(config, &outcomes, None)
}

fn codebook(res: Resolution) -> Result<Option<QuantizerModel>> {
    match res {
        Resolution::Infinite => Ok(None),
        Resolution::Bits(b) => lloyd_max_codebook(b).map(Some),
    }
}

fn qpsk(b0: bool, b1: bool) -> Complex64 {
    let s = |b: bool| if b { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
    Complex64::new(s(b0), s(b1))
}

/// Uncoded Gray-mapped QPSK over `n_symbols` data symbols per user and
/// realization, after a [`PILOT_SYMBOLS`]-long pilot preamble from which
/// each user estimates its scalar gain by least squares.
///
/// With the hard backend the DAC quantizes each transmit vector across
/// antennas and rescales by `1 / sqrt(1 - rho_DA)` to restore the power
/// budget; the ADC quantizes each user's block. The surrogate backend uses
/// the Bussgang models with analytic per-user ADC input power.
pub fn simulate_ber(config: &SystemConfig, n_symbols: usize, backend: Backend) -> Result<MonteCarloReport> {
    if n_symbols == 0 {
        return Err(invalid("n_symbols", "need at least one data symbol"));
    }
    let spec = config.precoder_spec()?;
    let s = config.scenario()?;
    let (dac, adc) = match backend {
        Backend::Hard => (codebook(config.b_da)?, codebook(config.b_ad)?),
        Backend::Surrogate => (None, None),
    };
    let (n, m) = (config.n_antennas, config.n_users);
    let len = PILOT_SYMBOLS + n_symbols;
    let outcomes = run_trials(config, |corr, rng| {
        let (mut outcome, resampled) = with_precoded(corr, config, &spec, rng, |ch, sys, rng| {
            let (siqnr, rate) = siqnr_summary(sys, s.rho_da, s.rho_ad);
            let bits: Vec<(bool, bool)> = (0..m * len).map(|_| (rng.random(), rng.random())).collect();
            // column-major: symbol t of user k at k + t m
            let symbols = DMatrix::from_iterator(m, len, bits.iter().map(|&(a, b)| qpsk(a, b)));
            let mut x = linalg::mul(&sys.p, &symbols);
            match backend {
                Backend::Hard => {
                    if let Some(q) = &dac {
                        let gain = 1.0 / (1.0 - s.rho_da).sqrt();
                        for col in x.as_mut_slice().chunks_mut(n) {
                            let out = quantize_hard(col, q)?;
                            for (c, o) in col.iter_mut().zip(out) {
                                *c = o * gain;
                            }
                        }
                    }
                }
                Backend::Surrogate => {
                    let p_diag = sys.p_diag();
                    for col in x.as_mut_slice().chunks_mut(n) {
                        let out = bussgang_dac(col, s.rho_da, &p_diag, rng)?;
                        col.copy_from_slice(&out);
                    }
                }
            }
            let mut y = linalg::mul(&ch.h, &x);
            y.iter_mut().for_each(|v| *v += complex_normal(rng, 1.0));
            if backend == Backend::Surrogate {
                let y_var: Vec<f64> = user_powers(sys)
                    .iter()
                    .map(|u| u.adc_input_power(s.rho_da, 1.0))
                    .collect();
                for col in y.as_mut_slice().chunks_mut(m) {
                    let out = bussgang_adc(col, s.rho_ad, &y_var, rng)?;
                    col.copy_from_slice(&out);
                }
            }
            // len x m: each user's block is contiguous
            let mut yt = y.transpose();
            if let Some(q) = &adc {
                for col in yt.as_mut_slice().chunks_mut(len) {
                    let out = quantize_hard(col, q)?;
                    col.copy_from_slice(&out);
                }
            }
            let mut errors = 0u64;
            for k in 0..m {
                let rx = yt.column(k);
                let (mut num, mut den) = (Complex64::new(0.0, 0.0), 0.0);
                for t in 0..PILOT_SYMBOLS {
                    let sym = symbols[(k, t)];
                    num += rx[t] * sym.conj();
                    den += sym.norm_sqr();
                }
                let gain = num / den;
                for t in PILOT_SYMBOLS..len {
                    let z = rx[t] / gain;
                    let (b0, b1) = bits[k + t * m];
                    errors += u64::from((z.re < 0.0) != b0) + u64::from((z.im < 0.0) != b1);
                }
            }
            Ok(TrialOutcome {
                siqnr,
                rate,
                bit_errors: errors,
                bits: 2 * (m * n_symbols) as u64,
                resampled: 0,
            })
        })?;
        outcome.resampled = resampled;
        Ok(outcome)
    })?;
    let bit_errors: u64 = outcomes.iter().map(|o| o.bit_errors).sum();
    let bits: u64 = outcomes.iter().map(|o| o.bits).sum();
    let p = bit_errors as f64 / bits as f64;
    let ber = BerEstimate {
        ber: p,
        std_err: (p * (1.0 - p) / bits as f64).sqrt(),
        bit_errors,
        bits,
        backend,
    };
    report(config, &outcomes, Some(ber))
}

/// Finite-`N` checks of the large-system limits behind the SIQNR formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeSystemDiagnostic {
    pub xi: f64,
    /// Mean over users and trials of `h_k^T (H_k^H H_k + alpha I)^-1 h_k^*`.
    pub quadratic_form: f64,
    pub quadratic_form_gap: f64,
    /// Max over antennas of `|d_n - P/N| / (P/N)`, `d` being `diag(P P^H)`
    /// averaged over the trial batch.
    pub diag_max_deviation: f64,
    /// Same, excluding the array edges where correlation is one-sided.
    pub diag_interior_max_deviation: f64,
    pub diag_rms_deviation: f64,
    /// Largest single-realization max deviation.
    pub diag_worst_realization: f64,
    pub c2_mean: f64,
    /// `-P (1 + xi)^2 / (beta xi'(rho))`.
    pub c2_limit: f64,
    pub c2_gap: f64,
    /// Antennas excluded at each end for the interior deviation.
    pub edge_width: usize,
}

/// Antennas at each array end whose correlation neighbourhood is cut off:
/// the smallest `k` with `nu^k < 1e-3`.
pub fn edge_width(nu: f64) -> usize {
    if nu == 0.0 {
        0
    } else {
        (1e-3f64.ln() / nu.ln()).ceil() as usize
    }
}

struct LimitTrial {
    quadratic_form: f64,
    p_diag: Vec<f64>,
    c2: f64,
}

/// Compare per-realization quantities with the limits used in the SIQNR
/// derivation. Requires an RZF policy.
pub fn check_large_system_limits(config: &SystemConfig) -> Result<LargeSystemDiagnostic> {
    let rho = config
        .rho()?
        .ok_or_else(|| invalid("precoder", "large-system checks need an RZF policy"))?;
    let spec = config.precoder_spec()?;
    let alpha = rho * config.n_antennas as f64;
    let s = config.scenario()?;
    config.validate()?;
    let corr = CorrelationModel::new(config.n_antennas, config.nu)?;
    corr.sqrt_matrix();
    let trials: Vec<LimitTrial> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(config.seed, t);
            with_precoded(&corr, config, &spec, &mut rng, |ch, sys, _| {
                let mut g = linalg::gram(&ch.h);
                for i in 0..g.nrows() {
                    g[(i, i)] += alpha;
                }
                let inv = Cholesky::new(g).ok_or(Error::Singular)?.inverse();
                let m = inv.nrows();
                let quadratic_form = (0..m)
                    .map(|k| {
                        let a = alpha * inv[(k, k)].re;
                        (1.0 - a) / a
                    })
                    .sum::<f64>()
                    / m as f64;
                Ok(LimitTrial {
                    quadratic_form,
                    p_diag: sys.p_diag(),
                    c2: sys.c * sys.c,
                })
            })
            .map(|(v, _)| v)
        })
        .collect::<Result<_>>()?;

    let moments = s.moments(rho)?;
    let n = config.n_antennas;
    let target = s.gamma0 / n as f64;
    let count = trials.len() as f64;
    let quadratic_form = trials.iter().map(|t| t.quadratic_form).sum::<f64>() / count;
    let mut avg = vec![0.0; n];
    for t in &trials {
        for (a, d) in avg.iter_mut().zip(&t.p_diag) {
            *a += d / count;
        }
    }
    let dev: Vec<f64> = avg.iter().map(|d| (d - target).abs() / target).collect();
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let width = edge_width(config.nu).min(n / 4);
    let worst = trials
        .iter()
        .map(|t| max(&t.p_diag.iter().map(|d| (d - target).abs() / target).collect::<Vec<_>>()))
        .fold(0.0, f64::max);
    let c2_mean = trials.iter().map(|t| t.c2).sum::<f64>() / count;
    let c2_limit = -s.gamma0 * (1.0 + moments.xi).powi(2) / (s.beta * moments.dxi_drho(s.beta));
    Ok(LargeSystemDiagnostic {
        xi: moments.xi,
        quadratic_form,
        quadratic_form_gap: (quadratic_form - moments.xi).abs() / moments.xi,
        diag_max_deviation: max(&dev),
        diag_interior_max_deviation: max(&dev[width..n - width]),
        diag_rms_deviation: (dev.iter().map(|d| d * d).sum::<f64>() / n as f64).sqrt(),
        diag_worst_realization: worst,
        c2_mean,
        c2_limit,
        c2_gap: (c2_mean - c2_limit).abs() / c2_limit,
        edge_width: width,
    })
}
