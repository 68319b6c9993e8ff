//! Converter quantization models.
//!
//! Two descriptions of a `b`-bit optimal non-uniform quantizer are provided:
//!
//! * the Bussgang surrogate, where the quantizer output is a scaled copy of
//!   its input plus uncorrelated Gaussian distortion whose power is set by the
//!   distortion factor `rho` ([`bussgang_dac`], [`bussgang_adc`]);
//! * an actual Lloyd-Max codebook for a unit-variance Gaussian input, applied
//!   sample by sample to the real and imaginary parts ([`quantize_hard`]).

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::complex_normal;

/// Minimum distortion of the optimal quantizer for 1 to 5 bits.
pub const DISTORTION_TABLE: [f64; 5] = [0.3634, 0.1175, 0.03454, 0.009497, 0.002499];

/// Largest codebook [`lloyd_max_codebook`] will build.
pub const MAX_CODEBOOK_BITS: u32 = 8;

const LLOYD_TOL: f64 = 1e-10;
const LLOYD_MAX_ITER: usize = 10_000;

/// Distortion factor of a `bits`-bit optimal quantizer.
///
/// Tabulated for 1..=5 bits; beyond that the high-resolution approximation
/// `(pi*sqrt(3)/2) * 2^(-2b)` is used.
pub fn distortion_factor(bits: u32) -> Result<f64> {
    match bits {
        0 => Err(invalid("bits", "a quantizer needs at least one bit")),
        1..=5 => Ok(DISTORTION_TABLE[bits as usize - 1]),
        _ => Ok(high_resolution_distortion(bits)),
    }
}

/// `(pi*sqrt(3)/2) * 2^(-2b)`.
pub fn high_resolution_distortion(bits: u32) -> f64 {
    PI * 3f64.sqrt() / 2.0 * 2f64.powi(-2 * bits as i32)
}

/// Converter resolution; `Infinite` stands for an ideal converter (`rho = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ResolutionRepr", into = "String")]
pub enum Resolution {
    Bits(u32),
    Infinite,
}

impl Resolution {
    pub fn distortion(self) -> Result<f64> {
        match self {
            Resolution::Bits(b) => distortion_factor(b),
            Resolution::Infinite => Ok(0.0),
        }
    }

    pub fn bits(self) -> Option<u32> {
        match self {
            Resolution::Bits(b) => Some(b),
            Resolution::Infinite => None,
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Bits(b) => write!(f, "{b}"),
            Resolution::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinite" | "ideal") {
            return Ok(Resolution::Infinite);
        }
        match t.parse::<u32>() {
            Ok(0) | Err(_) => Err(invalid("resolution", format!("expected bits >= 1 or `inf`, got `{s}`"))),
            Ok(b) => Ok(Resolution::Bits(b)),
        }
    }
}

/// Accepts either a bare bit count or a string such as `"3"` or `"inf"`.
#[derive(Deserialize)]
#[serde(untagged)]
enum ResolutionRepr {
    Bits(u32),
    Text(String),
}

impl TryFrom<ResolutionRepr> for Resolution {
    type Error = Error;
    fn try_from(r: ResolutionRepr) -> Result<Self> {
        match r {
            ResolutionRepr::Bits(0) => Err(invalid("resolution", "a converter needs at least one bit")),
            ResolutionRepr::Bits(b) => Ok(Resolution::Bits(b)),
            ResolutionRepr::Text(s) => s.parse(),
        }
    }
}

impl From<Resolution> for String {
    fn from(r: Resolution) -> String {
        r.to_string()
    }
}

/// Scalar quantizer for a zero-mean, unit-variance real Gaussian input.
///
/// `thresholds[i]` separates `levels[i]` from `levels[i + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub thresholds: Vec<f64>,
    pub levels: Vec<f64>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Reproduction level for a unit-scale input sample.
    pub fn quantize(&self, x: f64) -> f64 {
        self.levels[self.thresholds.partition_point(|&t| t < x)]
    }

    /// Cell boundaries including the infinite outer edges.
    fn edges(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.levels.len();
        (0..n).map(move |i| {
            let lo = if i == 0 {
                f64::NEG_INFINITY
            } else {
                self.thresholds[i - 1]
            };
            let hi = if i + 1 == n { f64::INFINITY } else { self.thresholds[i] };
            (lo, hi)
        })
    }

    /// Mean-square error on a standard Gaussian input, in closed form.
    pub fn mse(&self) -> f64 {
        self.edges()
            .zip(&self.levels)
            .map(|((a, b), &m)| {
                let p = normal_mass(a, b);
                let first = normal_pdf(a) - normal_pdf(b);
                let second = p + x_pdf(a) - x_pdf(b);
                second - 2.0 * m * first + m * m * p
            })
            .sum()
    }
}

/// A converter's quantizer: its resolution, distortion factor and, for
/// hard quantization, its codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerModel {
    pub bits: u32,
    pub rho: f64,
    pub codebook: Option<Codebook>,
}

impl QuantizerModel {
    /// Surrogate-only model (no codebook).
    pub fn new(bits: u32) -> Result<Self> {
        Ok(Self {
            bits,
            rho: distortion_factor(bits)?,
            codebook: None,
        })
    }
}

/// Minimum-MSE `2^bits`-level quantizer for a unit-variance Gaussian.
///
/// Levels start at the quantiles of `N(0, 3)` (the high-resolution optimal
/// point density) and are driven to the Lloyd-Max stationarity conditions
/// (thresholds at midpoints, levels at cell centroids). Each step tries a
/// Newton update on the tridiagonal stationarity system and falls back to a
/// plain Lloyd update whenever Newton fails to reduce the residual.
pub fn lloyd_max_codebook(bits: u32) -> Result<QuantizerModel> {
    if bits == 0 || bits > MAX_CODEBOOK_BITS {
        return Err(invalid(
            "bits",
            format!("codebooks are built for 1..={MAX_CODEBOOK_BITS} bits, got {bits}"),
        ));
    }
    let n = 1usize << bits;
    let mut levels: Vec<f64> = (0..n)
        .map(|i| 3f64.sqrt() * normal_quantile((i as f64 + 0.5) / n as f64))
        .collect();
    symmetrize(&mut levels);

    let mut iterations = 0;
    let mut step = lloyd_step(&levels);
    let mut residual = step.residual(&levels);
    while residual >= LLOYD_TOL {
        if iterations == LLOYD_MAX_ITER {
            return Err(Error::NoConvergence {
                solver: "Lloyd-Max iteration",
                iterations,
                residual,
            });
        }
        iterations += 1;

        let newton = step.newton_update(&levels);
        let accepted = newton.and_then(|cand| {
            let s = lloyd_step(&cand);
            let r = s.residual(&cand);
            (r < residual).then_some((cand, s, r))
        });
        match accepted {
            Some((cand, s, r)) => {
                levels = cand;
                step = s;
                residual = r;
            }
            None => {
                levels = step.centroids.clone();
                symmetrize(&mut levels);
                step = lloyd_step(&levels);
                residual = step.residual(&levels);
            }
        }
    }
    let thresholds = levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    Ok(QuantizerModel {
        bits,
        rho: distortion_factor(bits)?,
        codebook: Some(Codebook { thresholds, levels }),
    })
}

/// Cell centroids for the midpoint partition of `levels`, together with the
/// centroid sensitivities to the lower and upper cell edges.
struct LloydStep {
    centroids: Vec<f64>,
    d_lower: Vec<f64>,
    d_upper: Vec<f64>,
}

impl LloydStep {
    fn residual(&self, levels: &[f64]) -> f64 {
        self.centroids
            .iter()
            .zip(levels)
            .map(|(c, m)| (c - m).abs())
            .fold(0.0, f64::max)
    }

    /// Newton update for `centroid(levels) - levels = 0`; `None` if the
    /// result is not strictly increasing.
    fn newton_update(&self, levels: &[f64]) -> Option<Vec<f64>> {
        let n = levels.len();
        let sub: Vec<f64> = (0..n).map(|i| 0.5 * self.d_lower[i]).collect();
        let sup: Vec<f64> = (0..n).map(|i| 0.5 * self.d_upper[i]).collect();
        let diag: Vec<f64> = (0..n)
            .map(|i| 0.5 * (self.d_lower[i] + self.d_upper[i]) - 1.0)
            .collect();
        let rhs: Vec<f64> = (0..n).map(|i| levels[i] - self.centroids[i]).collect();
        let delta = solve_tridiagonal(&sub, &diag, &sup, &rhs)?;
        let mut next: Vec<f64> = levels.iter().zip(&delta).map(|(m, d)| m + d).collect();
        symmetrize(&mut next);
        next.windows(2).all(|w| w[0] < w[1]).then_some(next)
    }
}

fn lloyd_step(levels: &[f64]) -> LloydStep {
    let n = levels.len();
    let mut centroids = vec![0.0; n];
    let mut d_lower = vec![0.0; n];
    let mut d_upper = vec![0.0; n];
    for i in 0..n {
        let a = if i == 0 {
            f64::NEG_INFINITY
        } else {
            0.5 * (levels[i - 1] + levels[i])
        };
        let b = if i + 1 == n {
            f64::INFINITY
        } else {
            0.5 * (levels[i] + levels[i + 1])
        };
        let p = normal_mass(a, b);
        let c = (normal_pdf(a) - normal_pdf(b)) / p;
        centroids[i] = c;
        if a.is_finite() {
            d_lower[i] = normal_pdf(a) * (c - a) / p;
        }
        if b.is_finite() {
            d_upper[i] = normal_pdf(b) * (b - c) / p;
        }
    }
    LloydStep {
        centroids,
        d_lower,
        d_upper,
    }
}

/// Thomas algorithm; `sub[0]` and `sup[n-1]` are ignored.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom.abs() < 1e-300 {
        return None;
    }
    c[0] = sup[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - sub[i] * c[i - 1];
        if denom.abs() < 1e-300 {
            return None;
        }
        c[i] = sup[i] / denom;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

fn symmetrize(levels: &mut [f64]) {
    let n = levels.len();
    for i in 0..n / 2 {
        let m = 0.5 * (levels[n - 1 - i] - levels[i]);
        levels[i] = -m;
        levels[n - 1 - i] = m;
    }
}

/// DAC stage surrogate: `sqrt(1 - rho) * x + n`, with `n` independent
/// circularly-symmetric Gaussian of per-antenna power `rho * p_diag[n]`.
///
/// `p_diag` is the diagonal of `P P^H`.
pub fn bussgang_dac<R: Rng + ?Sized>(
    precoded: &[Complex64],
    rho_da: f64,
    p_diag: &[f64],
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    check_rho("rho_da", rho_da)?;
    check_len("p_diag", precoded.len(), p_diag.len())?;
    check_nonnegative("p_diag", p_diag)?;
    let gain = (1.0 - rho_da).sqrt();
    Ok(precoded
        .iter()
        .zip(p_diag)
        .map(|(&x, &p)| gain * x + complex_normal(rng, rho_da * p))
        .collect())
}

/// ADC stage surrogate: `(1 - rho) * y + n`, with `n` independent
/// circularly-symmetric Gaussian of per-user power `rho (1 - rho) y_var[k]`,
/// where `y_var[k] = E|y_k|^2`.
pub fn bussgang_adc<R: Rng + ?Sized>(
    received: &[Complex64],
    rho_ad: f64,
    y_var: &[f64],
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    check_rho("rho_ad", rho_ad)?;
    check_len("y_var", received.len(), y_var.len())?;
    check_nonnegative("y_var", y_var)?;
    let gain = 1.0 - rho_ad;
    Ok(received
        .iter()
        .zip(y_var)
        .map(|(&y, &v)| gain * y + complex_normal(rng, rho_ad * gain * v))
        .collect())
}

/// Hard quantization of a block of complex samples.
///
/// The real and imaginary parts are each normalized by their RMS over the
/// block, mapped to the nearest codebook level and scaled back. With
/// Lloyd-Max levels the output obeys `E[Q(x) x] = (1 - rho) E[x^2]`, the same
/// linear gain as the ADC surrogate. A zero-power component stays zero.
pub fn quantize_hard(signal: &[Complex64], model: &QuantizerModel) -> Result<Vec<Complex64>> {
    let codebook = model
        .codebook
        .as_ref()
        .ok_or_else(|| invalid("model", "hard quantization requires a codebook"))?;
    if signal.is_empty() {
        return Ok(Vec::new());
    }
    let n = signal.len() as f64;
    let rms_re = (signal.iter().map(|z| z.re * z.re).sum::<f64>() / n).sqrt();
    let rms_im = (signal.iter().map(|z| z.im * z.im).sum::<f64>() / n).sqrt();
    let q = |x: f64, s: f64| if s > 0.0 { s * codebook.quantize(x / s) } else { 0.0 };
    Ok(signal
        .iter()
        .map(|z| Complex64::new(q(z.re, rms_re), q(z.im, rms_im)))
        .collect())
}

fn check_rho(name: &'static str, rho: f64) -> Result<()> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(invalid(
            name,
            format!("distortion factor must lie in [0, 1), got {rho}"),
        ))
    }
}

fn check_len(name: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(invalid(name, format!("expected length {expected}, got {got}")))
    }
}

fn check_nonnegative(name: &'static str, v: &[f64]) -> Result<()> {
    match v.iter().position(|&x| !(x >= 0.0)) {
        None => Ok(()),
        Some(i) => Err(invalid(name, format!("entry {i} is negative ({})", v[i]))),
    }
}

pub(crate) fn normal_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }
}

fn x_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        x * normal_pdf(x)
    }
}

/// Upper tail `P(X > x)`.
fn normal_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `P(a < X < b)` computed from whichever tail keeps precision.
pub(crate) fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        normal_tail(a) - normal_tail(b)
    } else if b <= 0.0 {
        normal_tail(-b) - normal_tail(-a)
    } else {
        1.0 - normal_tail(b) - normal_tail(-a)
    }
}

/// Inverse standard normal CDF by bisection on the tail function.
fn normal_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 1.0 - normal_tail(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::StandardNormal;

    #[test]
    fn table_values() {
        assert_eq!(distortion_factor(1).unwrap(), 0.3634);
        assert_eq!(distortion_factor(3).unwrap(), 0.03454);
        let six = distortion_factor(6).unwrap();
        assert!((six - 6.643e-4).abs() < 1e-6, "{six}");
        assert!(distortion_factor(0).is_err());
    }

    #[test]
    fn distortion_is_monotone() {
        for b in 1..10 {
            assert!(distortion_factor(b + 1).unwrap() < distortion_factor(b).unwrap());
        }
    }

    #[test]
    fn approximation_gap_at_table_boundary() {
        let t = distortion_factor(5).unwrap();
        let gap = (t - high_resolution_distortion(5)).abs() / t;
        assert!(gap < 0.15, "{gap}");
    }

    #[test]
    fn resolution_parsing() {
        assert_eq!("3".parse::<Resolution>().unwrap(), Resolution::Bits(3));
        assert_eq!("inf".parse::<Resolution>().unwrap(), Resolution::Infinite);
        assert!("0".parse::<Resolution>().is_err());
        assert!("x".parse::<Resolution>().is_err());
        assert_eq!(Resolution::Infinite.distortion().unwrap(), 0.0);
    }

    #[test]
    fn one_bit_codebook_is_closed_form() {
        let m = lloyd_max_codebook(1).unwrap();
        let cb = m.codebook.unwrap();
        let l = (2.0 / PI).sqrt();
        assert!((cb.levels[0] + l).abs() < 1e-12);
        assert!((cb.levels[1] - l).abs() < 1e-12);
        assert!((cb.mse() - (1.0 - 2.0 / PI)).abs() < 1e-12);
    }

    #[test]
    fn codebooks_match_table_and_are_symmetric() {
        for bits in 1..=5 {
            let m = lloyd_max_codebook(bits).unwrap();
            let cb = m.codebook.as_ref().unwrap();
            assert!((cb.mse() - m.rho).abs() < 1e-3, "bits {bits}: {}", cb.mse());
            for i in 0..cb.len() {
                assert_eq!(cb.levels[i], -cb.levels[cb.len() - 1 - i]);
            }
            assert!(cb.levels.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn eight_bit_codebook() {
        let m = lloyd_max_codebook(8).unwrap();
        let cb = m.codebook.unwrap();
        assert_eq!(cb.len(), 256);
        assert!(cb.mse() < distortion_factor(8).unwrap() * 1.05, "{}", cb.mse());
        assert!(lloyd_max_codebook(9).is_err());
        assert!(lloyd_max_codebook(0).is_err());
    }

    #[test]
    fn two_bit_monte_carlo_mse() {
        let cb = lloyd_max_codebook(2).unwrap().codebook.unwrap();
        let mut rng = stream(11, 0);
        let n = 400_000;
        let mse: f64 = (0..n)
            .map(|_| {
                let x: f64 = rng.sample(StandardNormal);
                (x - cb.quantize(x)).powi(2)
            })
            .sum::<f64>()
            / n as f64;
        assert!((mse - 0.1175).abs() < 1e-3, "{mse}");
    }

    #[test]
    fn surrogates_reject_bad_input() {
        let mut rng = stream(0, 0);
        let x = vec![Complex64::new(1.0, 0.0); 2];
        assert!(bussgang_dac(&x, 0.1, &[1.0, -1.0], &mut rng).is_err());
        assert!(bussgang_adc(&x, 0.1, &[1.0, -0.5], &mut rng).is_err());
        assert!(bussgang_dac(&x, 1.0, &[1.0, 1.0], &mut rng).is_err());
        assert!(bussgang_dac(&x, 0.1, &[1.0], &mut rng).is_err());
    }

    #[test]
    fn zero_distortion_is_identity() {
        let mut rng = stream(0, 1);
        let x = vec![Complex64::new(0.3, -1.2), Complex64::new(2.0, 0.5)];
        assert_eq!(bussgang_dac(&x, 0.0, &[1.0, 1.0], &mut rng).unwrap(), x);
        assert_eq!(bussgang_adc(&x, 0.0, &[1.0, 1.0], &mut rng).unwrap(), x);
    }

    #[test]
    fn hard_one_bit_is_sign() {
        let model = lloyd_max_codebook(1).unwrap();
        let l = (2.0 / PI).sqrt();
        let z = [Complex64::new(0.7, -2.0)];
        let q = quantize_hard(&z, &model).unwrap();
        assert!((q[0].re - 0.7 * l).abs() < 1e-12);
        assert!((q[0].im + 2.0 * l).abs() < 1e-12);

        let zeros = vec![Complex64::new(0.0, 0.0); 4];
        assert_eq!(quantize_hard(&zeros, &model).unwrap(), zeros);
        assert!(quantize_hard(&z, &QuantizerModel::new(1).unwrap()).is_err());
    }
}
