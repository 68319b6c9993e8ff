//! Solvers for the deterministic-equivalent fixed point
//! `xi = E[lambda (1 + xi) / (rho (1 + xi) + beta lambda)]` and the moment
//! functionals `E_ij = E[lambda^i / (rho (1 + xi) + beta lambda)^j]`.

use crate::error::{invalid, Error, Result};

/// Convergence threshold on `|xi - rhs(xi)| / max(1, xi)`.
pub const XI_TOLERANCE: f64 = 1e-12;

const DAMPING: f64 = 0.5;
const MAX_ITERATIONS: usize = 100_000;
/// Consecutive residual increases taken as oscillation.
const OSCILLATION_LIMIT: usize = 20;

/// `xi` together with the two moments the SIQNR formulas need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub xi: f64,
    pub e12: f64,
    pub e22: f64,
}

impl Moments {
    /// `|xi (1 - beta E22) - rho (1 + xi)^2 E12 - beta E22|`, which vanishes
    /// at the exact fixed point.
    pub fn identity_residual(&self, rho: f64, beta: f64) -> f64 {
        let Moments { xi, e12, e22 } = *self;
        (xi * (1.0 - beta * e22) - rho * (1.0 + xi).powi(2) * e12 - beta * e22).abs()
    }

    /// `d xi / d rho = -(1 + xi)^2 E12 / (1 - beta E22)`.
    pub fn dxi_drho(&self, beta: f64) -> f64 {
        -(1.0 + self.xi).powi(2) * self.e12 / (1.0 - beta * self.e22)
    }
}

fn check_rho_beta(rho: f64, beta: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid("rho", format!("must be positive and finite, got {rho}")));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(invalid("beta", format!("must be nonnegative and finite, got {beta}")));
    }
    Ok(())
}

fn scaled_residual(x: f64, fx: f64) -> f64 {
    (x - fx).abs() / x.max(1.0)
}

/// Solve `x = rhs(x)` on `x > 0` for an increasing, bounded `rhs` with
/// `rhs(0) > 0`: damped iteration from `x0`, with bisection on `x - rhs(x)`
/// as the fallback when the iteration oscillates or stalls.
pub(crate) fn solve_fixed_point<F>(rhs: F, x0: f64, solver: &'static str) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut x = x0;
    let mut fx = rhs(x);
    let mut residual = scaled_residual(x, fx);
    let mut rising = 0;
    for _ in 0..MAX_ITERATIONS {
        if residual < XI_TOLERANCE {
            return Ok(x);
        }
        if !residual.is_finite() || rising >= OSCILLATION_LIMIT {
            break;
        }
        x = (1.0 - DAMPING) * x + DAMPING * fx;
        fx = rhs(x);
        let next = scaled_residual(x, fx);
        rising = if next > residual { rising + 1 } else { 0 };
        residual = next;
    }
    bisect_fixed_point(&rhs, x0, solver)
}

fn bisect_fixed_point<F>(rhs: &F, x0: f64, solver: &'static str) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let g = |x: f64| x - rhs(x);
    let mut lo = 0.0;
    let mut hi = x0.max(1.0);
    let mut expansions = 0;
    while g(hi) <= 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > 200 || !hi.is_finite() {
            return Err(Error::NoConvergence {
                solver,
                iterations: expansions,
                residual: f64::INFINITY,
            });
        }
    }
    let mut iterations = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        let fm = rhs(mid);
        if scaled_residual(mid, fm) < XI_TOLERANCE {
            return Ok(mid);
        }
        if mid - fm > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
        if hi - lo <= f64::EPSILON * hi || iterations > 2_000 {
            let best = 0.5 * (lo + hi);
            let r = scaled_residual(best, rhs(best));
            return if r < XI_TOLERANCE {
                Ok(best)
            } else {
                Err(Error::NoConvergence {
                    solver,
                    iterations,
                    residual: r,
                })
            };
        }
    }
}

/// Closed-form `xi` for uncorrelated channels: the positive root of
/// `xi = (1 + xi) / (rho (1 + xi) + beta)`, i.e.
/// `0.5 [sqrt((1-beta)^2/rho^2 + 2(1+beta)/rho + 1) + (1-beta)/rho - 1]`.
pub fn xi_uncorrelated(rho: f64, beta: f64) -> f64 {
    // Same root of rho xi^2 + b xi - 1 = 0, arranged to avoid cancellation.
    let b = rho + beta - 1.0;
    let root = (b * b + 4.0 * rho).sqrt();
    if b > 0.0 {
        2.0 / (b + root)
    } else {
        (root - b) / (2.0 * rho)
    }
}

/// Uncorrelated moments: `E12 = E22 = 1 / (rho (1 + xi) + beta)^2`.
pub fn moments_uncorrelated(rho: f64, beta: f64) -> Result<Moments> {
    check_rho_beta(rho, beta)?;
    let xi = xi_uncorrelated(rho, beta);
    let e = (rho * (1.0 + xi) + beta).powi(-2);
    Ok(Moments { xi, e12: e, e22: e })
}

/// `xi` for an explicit eigenvalue list (mean assumed 1).
pub fn solve_xi_spectrum(rho: f64, beta: f64, spectrum: &[f64]) -> Result<f64> {
    check_rho_beta(rho, beta)?;
    if spectrum.is_empty() {
        return Err(invalid("spectrum", "empty eigenvalue list"));
    }
    if let Some(l) = spectrum.iter().find(|l| !(**l >= 0.0)) {
        return Err(invalid("spectrum", format!("eigenvalue {l} is negative")));
    }
    let n = spectrum.len() as f64;
    let rhs = |xi: f64| {
        let s = 1.0 + xi;
        spectrum.iter().map(|&l| l * s / (rho * s + beta * l)).sum::<f64>() / n
    };
    solve_fixed_point(rhs, 1.0 / rho, "spectrum fixed point")
}

/// `xi`, `E12`, `E22` for an explicit eigenvalue list.
pub fn moments_spectrum(rho: f64, beta: f64, spectrum: &[f64]) -> Result<Moments> {
    let xi = solve_xi_spectrum(rho, beta, spectrum)?;
    let n = spectrum.len() as f64;
    let t = rho * (1.0 + xi);
    let (mut e12, mut e22) = (0.0, 0.0);
    for &l in spectrum {
        let d = (t + beta * l).powi(2);
        e12 += l / d;
        e22 += l * l / d;
    }
    Ok(Moments {
        xi,
        e12: e12 / n,
        e22: e22 / n,
    })
}

/// Coefficients `a`, `b` of the `a + b cos w` form of the Toeplitz integrals,
/// and `a^2 - b^2` computed as a product of positive factors.
fn toeplitz_ab(rho: f64, beta: f64, nu: f64, xi: f64) -> (f64, f64, f64) {
    let c = 1.0 - nu * nu;
    let tail = beta * c / (1.0 + xi);
    let a = rho * (1.0 + nu * nu) + tail;
    let b = -2.0 * rho * nu;
    let minus = rho * (1.0 - nu) * (1.0 - nu) + tail;
    let plus = rho * (1.0 + nu) * (1.0 + nu) + tail;
    (a, b, minus * plus)
}

/// `xi`, `E12`, `E22` in the large-`N` limit of the exponential Toeplitz
/// correlation, using the closed-form integrals over its spectral density.
pub fn solve_xi_toeplitz(rho: f64, beta: f64, nu: f64) -> Result<Moments> {
    check_rho_beta(rho, beta)?;
    if !(0.0..1.0).contains(&nu) {
        return Err(invalid("nu", format!("must lie in [0, 1), got {nu}")));
    }
    let c = 1.0 - nu * nu;
    let rhs = |xi: f64| {
        let (_, _, d) = toeplitz_ab(rho, beta, nu, xi);
        c / d.sqrt()
    };
    let xi = solve_fixed_point(rhs, 1.0 / rho, "Toeplitz fixed point")?;
    let (a, b, d) = toeplitz_ab(rho, beta, nu, xi);
    if !(d > 0.0) {
        return Err(Error::NumericFault {
            context: "Toeplitz moments",
            detail: format!("a^2 - b^2 = {d} is not positive"),
        });
    }
    let (big_a, big_b) = (1.0 + nu * nu, -2.0 * nu);
    let denom = (1.0 + xi).powi(2) * d * d.sqrt();
    Ok(Moments {
        xi,
        e12: c * (a * big_a - b * big_b) / denom,
        e22: a * c * c / denom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncorrelated_reference_value() {
        let xi = xi_uncorrelated(0.31027, 0.5);
        assert!((xi - 2.1269).abs() < 1e-4, "{xi}");
        let residual = (xi - (1.0 + xi) / (0.31027 * (1.0 + xi) + 0.5)).abs();
        assert!(residual < 1e-10);
    }

    #[test]
    fn tiny_loading_gives_inverse_rho() {
        for rho in [0.1, 0.5, 2.0] {
            assert!((xi_uncorrelated(rho, 1e-12) - 1.0 / rho).abs() < 1e-6);
            let s = [0.2, 1.8, 0.5, 1.5];
            assert!((solve_xi_spectrum(rho, 1e-9, &s).unwrap() - 1.0 / rho).abs() < 1e-6);
        }
    }

    #[test]
    fn flat_spectrum_matches_closed_form() {
        for (rho, beta) in [(0.01, 1.0), (0.31, 0.5), (5.0, 0.1)] {
            let a = solve_xi_spectrum(rho, beta, &[1.0; 7]).unwrap();
            let b = xi_uncorrelated(rho, beta);
            assert!((a - b).abs() < 1e-10 * b.max(1.0));
        }
    }

    #[test]
    fn toeplitz_collapses_at_zero_correlation() {
        let m = solve_xi_toeplitz(0.3, 0.4, 0.0).unwrap();
        let u = moments_uncorrelated(0.3, 0.4).unwrap();
        assert!((m.xi - u.xi).abs() < 1e-11);
        assert!((m.e12 - m.e22).abs() < 1e-14);
        assert!((m.e12 - u.e12).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(solve_xi_spectrum(0.0, 0.5, &[1.0]).is_err());
        assert!(solve_xi_spectrum(0.1, 0.5, &[]).is_err());
        assert!(solve_xi_spectrum(0.1, 0.5, &[1.0, -0.1]).is_err());
        assert!(solve_xi_toeplitz(0.1, 0.5, 1.0).is_err());
    }

    #[test]
    fn bisection_fallback_handles_oscillation() {
        // Slope -3 makes the damped map x -> 0.5 x + 0.5 rhs(x) expand.
        let steep = |x: f64| (8.0 - 3.0 * (x - 2.0)).max(0.0);
        let x = solve_fixed_point(steep, 1.0, "test").unwrap();
        assert!((x - 3.5).abs() < 1e-10, "{x}");
    }
}
