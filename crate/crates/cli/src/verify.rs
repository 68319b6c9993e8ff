//! Invariant checks at pinned seeds.

use std::f64::consts::FRAC_2_PI;
use std::fmt;

use qmimo_core::asymptotics::{
    asymptotic_siqnr, low_snr_rate, moments_spectrum, optimal_beta_closed_form, optimal_beta_numeric,
    optimal_siqnr_and_rate, rate_loss_per_energy, solve_xi_toeplitz, Scenario,
};
use qmimo_core::channel::{exp_toeplitz, sample_channel, spectral_average};
use qmimo_core::montecarlo::{
    check_large_system_limits, simulate_ber, simulate_siqnr, Backend, RhoPolicy, SystemConfig,
};
use qmimo_core::optimize::{argmax, log_space};
use qmimo_core::precoding::{build_precoder, optimal_rho, PrecoderKind, PrecoderSpec};
use qmimo_core::quant::{distortion_factor, high_resolution_distortion, lloyd_max_codebook, DISTORTION_TABLE};
use qmimo_core::rng::{derive_seed, stream};
use qmimo_core::units::db_to_linear;
use rand::Rng;

use crate::error::CliError;
use crate::spec::ExperimentSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Fails for a documented reason; reported but does not fail the run.
    KnownDeviation,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::KnownDeviation => "XFAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| c.status == Status::Fail).count()
    }

    fn count(&self, s: Status) -> usize {
        self.checks.iter().filter(|c| c.status == s).count()
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", c.status, c.name, c.detail)?;
        }
        writeln!(
            f,
            "summary: {} passed, {} failed, {} known deviations",
            self.count(Status::Pass),
            self.count(Status::Fail),
            self.count(Status::KnownDeviation)
        )
    }
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check {
        name,
        status: if pass { Status::Pass } else { Status::Fail },
        detail,
    }
}

/// `(beta, gamma0_db, b_da, quoted rho*)`
const QUOTED_RHO: [(f64, f64, usize, f64); 11] = [
    (0.5, 15.0, 1, 0.3103),
    (0.5, 5.0, 4, 0.1644),
    (0.5, 5.0, 3, 0.1817),
    (0.5, 5.0, 2, 0.2457),
    (0.25, 5.0, 1, 0.2669),
    (0.3125, 5.0, 1, 0.3336),
    (0.375, 5.0, 1, 0.4003),
    (0.4375, 5.0, 1, 0.4671),
    (0.25, 4.0, 1, 0.2991),
    (0.25, 3.0, 1, 0.3395),
    (0.25, 2.0, 1, 0.3905),
];

fn distortion_table(table: &[f64]) -> Result<Check, CliError> {
    let mut worst: f64 = 0.0;
    for (b, &t) in (1..=5u32).zip(table) {
        let mse = lloyd_max_codebook(b)?.codebook.expect("finite resolution").mse();
        worst = worst.max((mse - t).abs());
    }
    let one = lloyd_max_codebook(1)?.codebook.expect("finite resolution").mse();
    let one_err = (one - (1.0 - FRAC_2_PI)).abs();
    Ok(check(
        "distortion_table",
        worst < 1e-3 && one_err < 1e-6,
        format!("max |Lloyd-Max MSE - table| = {worst:.2e}, 1-bit error {one_err:.1e}"),
    ))
}

fn distortion_shape() -> Result<Check, CliError> {
    let values = (1..=10).map(distortion_factor).collect::<Result<Vec<_>, _>>()?;
    let monotone = values.windows(2).all(|w| w[1] < w[0]);
    let edge = (DISTORTION_TABLE[4] - high_resolution_distortion(5)).abs() / DISTORTION_TABLE[4];
    Ok(check(
        "distortion_monotone_and_continuous",
        monotone && edge < 0.15,
        format!(
            "decreasing over 1..10 bits: {monotone}, 5-bit approximation gap {:.1}%",
            100.0 * edge
        ),
    ))
}

fn quoted_rho_star() -> Result<Check, CliError> {
    let mut worst: f64 = 0.0;
    for (beta, db, b_da, quoted) in QUOTED_RHO {
        let r = optimal_rho(beta, db_to_linear(db), DISTORTION_TABLE[b_da - 1])?;
        worst = worst.max((r - quoted).abs());
    }
    Ok(check(
        "rho_star_quoted_values",
        worst < 5e-4,
        format!("max |rho* - quoted| = {worst:.2e}"),
    ))
}

fn rho_star_grid() -> Result<Check, CliError> {
    let grid = log_space(1e-2, 10.0, 200);
    let step = (grid[1] / grid[0]).ln();
    let mut worst: f64 = 0.0;
    for (beta, db, b_da, _) in QUOTED_RHO {
        let gamma0 = db_to_linear(db);
        let rho_da = DISTORTION_TABLE[b_da - 1];
        let star = optimal_rho(beta, gamma0, rho_da)?;
        for nu in [0.0, 0.2, 0.5, 0.8] {
            for rho_ad in DISTORTION_TABLE {
                let s = Scenario {
                    beta,
                    gamma0,
                    rho_da,
                    rho_ad,
                    nu,
                    eta: 1.0,
                };
                let g = grid
                    .iter()
                    .map(|&r| asymptotic_siqnr(&s.at_rho(r)).map(|x| x.gamma))
                    .collect::<Result<Vec<_>, _>>()?;
                let best = grid[argmax(&g).expect("nonempty grid")];
                worst = worst.max((best.ln() - star.ln()).abs() / step);
            }
        }
    }
    Ok(check(
        "rho_star_grid_argmax",
        worst <= 1.0,
        format!("worst offset {worst:.3} grid steps"),
    ))
}

fn rate_loss() -> Result<Check, CliError> {
    let (rda, rad) = (DISTORTION_TABLE[0], DISTORTION_TABLE[2]);
    let l = rate_loss_per_energy(0.5, rda, rad)?;
    let g = 1e-4;
    let q = (low_snr_rate(0.5, g, rda, 0.0) - low_snr_rate(0.5, g, rda, rad)) / g;
    let rel = (q - l).abs() / l;
    Ok(check(
        "low_snr_rate_loss",
        (l - 0.06345).abs() <= 1e-4 && rel < 1e-3,
        format!("limit {l:.6}, finite quotient rel. diff {rel:.2e}"),
    ))
}

fn uncorrelated(db: f64, rho_ad: f64) -> Scenario {
    Scenario {
        beta: 0.5,
        gamma0: db_to_linear(db),
        rho_da: DISTORTION_TABLE[0],
        rho_ad,
        nu: 0.0,
        eta: 1.0,
    }
}

fn quoted_loadings() -> Result<Check, CliError> {
    let quoted = [0.2324, 0.2330, 0.2409, 0.2570, 0.2881];
    let rads = [
        0.0,
        DISTORTION_TABLE[4],
        DISTORTION_TABLE[2],
        DISTORTION_TABLE[1],
        DISTORTION_TABLE[0],
    ];
    let mut worst: f64 = 0.0;
    for (rad, q) in rads.into_iter().zip(quoted) {
        worst = worst.max((optimal_beta_numeric(&uncorrelated(0.0, rad))?.beta - q).abs());
    }
    Ok(check(
        "beta_star_quoted_values",
        worst <= 0.005,
        format!("max error {worst:.4}"),
    ))
}

fn loading_grows_with_snr() -> Result<Check, CliError> {
    let mut values = Vec::new();
    for db in [-15.0, -10.0, -5.0, 0.0, 5.0, 10.0] {
        values.push(optimal_beta_numeric(&uncorrelated(db, DISTORTION_TABLE[2]))?.beta);
    }
    let ok = values.windows(2).all(|w| w[1] > w[0]);
    Ok(check("beta_star_increases_with_snr", ok, format!("{values:.4?}")))
}

/// The closed form keeps only the leading low-SNR term, which leaves a
/// factor of sqrt(2) against the exact optimum; this check cannot pass.
fn closed_form_loading() -> Result<Check, CliError> {
    let mut gaps = Vec::new();
    for db in [0.0, -5.0, -10.0, -15.0] {
        let s = uncorrelated(db, DISTORTION_TABLE[2]);
        let numeric = optimal_beta_numeric(&s)?.beta;
        let closed = optimal_beta_closed_form(s.gamma0, s.rho_da, s.rho_ad, s.eta);
        gaps.push((closed - numeric).abs() / numeric);
    }
    let pass = gaps.windows(2).all(|w| w[1] < w[0]) && gaps[3] < 0.05;
    Ok(Check {
        name: "beta_star_closed_form",
        status: if pass { Status::Pass } else { Status::KnownDeviation },
        detail: format!(
            "relative gap at 0/-5/-10/-15 dB = {:.1?}%; ratio tends to sqrt(2) at low SNR",
            gaps.iter().map(|g| 100.0 * g).collect::<Vec<_>>()
        ),
    })
}

fn fixed_point_identities(seed: u64) -> Result<Check, CliError> {
    let mut rng = stream(derive_seed(seed, 1), 0);
    let (mut identity, mut derivative): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let rho = 10f64.powf(rng.random_range(-3.0..1.0));
        let beta = rng.random_range(1e-3..=1.0);
        let nu = rng.random_range(0.0..0.9);
        let m = solve_xi_toeplitz(rho, beta, nu)?;
        identity = identity.max(m.identity_residual(rho, beta));
        let h = 1e-6 * rho;
        let fd = (solve_xi_toeplitz(rho + h, beta, nu)?.xi - solve_xi_toeplitz(rho - h, beta, nu)?.xi) / (2.0 * h);
        let exact = m.dxi_drho(beta);
        derivative = derivative.max((fd - exact).abs() / exact.abs());
    }
    Ok(check(
        "fixed_point_identities",
        identity < 1e-8 && derivative < 1e-5,
        format!("identity residual {identity:.1e}, derivative rel. error {derivative:.1e}"),
    ))
}

fn toeplitz_closed_forms() -> Result<Check, CliError> {
    let mut worst: f64 = 0.0;
    for (rho, beta, nu) in [(0.31027, 0.5, 0.5), (0.05, 0.9, 0.8), (2.0, 0.2, 0.3)] {
        let m = solve_xi_toeplitz(rho, beta, nu)?;
        let rhs = |xi: f64| spectral_average(nu, 100_000, |l| l * (1.0 + xi) / (rho * (1.0 + xi) + beta * l));
        let (mut lo, mut hi) = (0.0, 1.0 / rho + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid > rhs(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let xi = 0.5 * (lo + hi);
        let t = rho * (1.0 + xi);
        let e12 = spectral_average(nu, 100_000, |l| l / (t + beta * l).powi(2))?;
        let e22 = spectral_average(nu, 100_000, |l| (l / (t + beta * l)).powi(2))?;
        for (a, b) in [(m.xi, xi), (m.e12, e12), (m.e22, e22)] {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    let finite = moments_spectrum(0.31027, 0.5, exp_toeplitz(2048, 0.5)?.spectrum())?;
    let limit = solve_xi_toeplitz(0.31027, 0.5, 0.5)?;
    let eig = (finite.xi - limit.xi).abs();
    Ok(check(
        "toeplitz_closed_forms",
        worst < 1e-8 && eig < 1e-3,
        format!("quadrature gap {worst:.1e}, N=2048 eigenvalue gap {eig:.1e}"),
    ))
}

fn rho_star_optimality() -> Result<Check, CliError> {
    let mut worst_slope: f64 = 0.0;
    let mut grid_ok = true;
    for (nu, b_ad) in [(0.0, 3), (0.5, 1), (0.8, 5)] {
        let s = Scenario {
            beta: 0.5,
            gamma0: db_to_linear(15.0),
            rho_da: DISTORTION_TABLE[0],
            rho_ad: DISTORTION_TABLE[b_ad - 1],
            nu,
            eta: 1.0,
        };
        let star = optimal_siqnr_and_rate(&s)?;
        let g = |rho: f64| asymptotic_siqnr(&s.at_rho(rho)).map(|x| x.gamma);
        let h = 1e-4 * star.rho;
        let slope = (g(star.rho + h)? - g(star.rho - h)?) / (2.0 * h) * star.rho / star.gamma;
        worst_slope = worst_slope.max(slope.abs());
        for rho in log_space(1e-3, 10.0, 1000) {
            grid_ok &= g(rho)? <= star.gamma * (1.0 + 1e-12);
        }
    }
    Ok(check(
        "rho_star_stationary",
        worst_slope < 1e-6 && grid_ok,
        format!("normalized slope {worst_slope:.1e}, dominates 1000-point grid: {grid_ok}"),
    ))
}

fn power_constraint(seed: u64) -> Result<Check, CliError> {
    let mut worst: f64 = 0.0;
    for (i, nu) in [0.0, 0.5, 0.9].into_iter().enumerate() {
        let corr = exp_toeplitz(64, nu)?;
        let h = sample_channel(&corr, 24, &mut stream(derive_seed(seed, 2), i as u64))?.h;
        for kind in [PrecoderKind::Rzf { alpha: 20.0 }, PrecoderKind::Zf, PrecoderKind::Mrc] {
            let sys = build_precoder(
                &h,
                &PrecoderSpec {
                    kind,
                    power_budget: 10.0,
                },
            )?;
            worst = worst.max((sys.total_power() - 10.0).abs() / 10.0);
        }
    }
    Ok(check(
        "precoder_power_constraint",
        worst < 1e-10,
        format!("max rel. deviation {worst:.1e}"),
    ))
}

fn deterministic_equivalent(base: &SystemConfig) -> Result<Check, CliError> {
    let r = simulate_siqnr(base)?;
    Ok(check(
        "deterministic_equivalent",
        r.relative_gap < 0.05,
        format!(
            "N={} M={} {} trials: MC {:.4} +- {:.4} vs limit {:.4}, gap {:.2}%",
            base.n_antennas,
            base.n_users,
            r.trials,
            r.mean_siqnr,
            r.siqnr_std_err,
            r.asymptotic_reference.gamma,
            100.0 * r.relative_gap
        ),
    ))
}

fn large_system_limits(seed: u64) -> Result<Check, CliError> {
    let c = SystemConfig {
        nu: 0.5,
        trials: 8,
        seed: derive_seed(seed, 3),
        ..SystemConfig::new(512, 256, 15.0)
    };
    let d = check_large_system_limits(&c)?;
    Ok(check(
        "large_system_limits",
        d.quadratic_form_gap < 0.05 && d.c2_gap < 0.05 && d.diag_interior_max_deviation < 0.10,
        format!(
            "quadratic form gap {:.2}%, c^2 gap {:.2}%, diag(PP^H) interior deviation {:.2}%",
            100.0 * d.quadratic_form_gap,
            100.0 * d.c2_gap,
            100.0 * d.diag_interior_max_deviation
        ),
    ))
}

fn precoder_ordering(seed: u64, trials: usize) -> Result<Check, CliError> {
    let mut ok = true;
    let mut mrc_gap = 0.0;
    for (i, db) in [-20.0, 0.0, 20.0].into_iter().enumerate() {
        let run = |precoder| {
            simulate_siqnr(&SystemConfig {
                nu: 0.5,
                precoder,
                trials,
                seed: derive_seed(seed, 10 + i as u64),
                ..SystemConfig::new(64, 16, db)
            })
        };
        let opt = run(RhoPolicy::Optimal)?;
        for policy in [RhoPolicy::Conventional, RhoPolicy::Zf, RhoPolicy::Mrc] {
            let other = run(policy)?;
            ok &= opt.mean_rate + 2.0 * opt.rate_std_err.hypot(other.rate_std_err) >= other.mean_rate;
            if i == 0 && policy == RhoPolicy::Mrc {
                mrc_gap = ((opt.mean_rate - other.mean_rate) / opt.mean_rate).abs();
            }
        }
    }
    Ok(check(
        "precoder_ordering",
        ok && mrc_gap < 0.05,
        format!(
            "optimal RZF best at -20/0/20 dB: {ok}; MRC gap at -20 dB {:.2}%",
            100.0 * mrc_gap
        ),
    ))
}

fn ber_floor(seed: u64) -> Result<Check, CliError> {
    let ber = |db, nu, precoder, tag| {
        let c = SystemConfig {
            nu,
            precoder,
            trials: 40,
            seed: derive_seed(seed, tag),
            ..SystemConfig::new(64, 32, db)
        };
        simulate_ber(&c, 500, Backend::Hard).map(|r| r.ber.expect("BER run"))
    };
    let b20 = ber(20.0, 0.5, RhoPolicy::Optimal, 20)?;
    let b30 = ber(30.0, 0.5, RhoPolicy::Optimal, 21)?;
    let opt = ber(10.0, 0.8, RhoPolicy::Optimal, 22)?;
    let conv = ber(10.0, 0.8, RhoPolicy::Conventional, 22)?;
    let floor = b30.ber > 0.5 * b20.ber;
    let order = opt.ber <= conv.ber + 2.0 * opt.std_err.hypot(conv.std_err);
    Ok(check(
        "ber_error_floor",
        floor && order,
        format!(
            "20 dB {:.4}, 30 dB {:.4}; nu=0.8 10 dB optimal {:.4} vs conventional {:.4}",
            b20.ber, b30.ber, opt.ber, conv.ber
        ),
    ))
}

/// Run every check. The report depends only on `spec`, so two runs with the
/// same seed print identical text.
pub fn verify(spec: &ExperimentSpec) -> Result<VerifyReport, CliError> {
    spec.validate()?;
    spec.base.validate()?;
    let seed = spec.base.seed;
    let table = spec.distortion_table.as_deref().unwrap_or(&DISTORTION_TABLE);
    let checks = vec![
        distortion_table(table)?,
        distortion_shape()?,
        quoted_rho_star()?,
        rho_star_grid()?,
        rho_star_optimality()?,
        rate_loss()?,
        quoted_loadings()?,
        loading_grows_with_snr()?,
        closed_form_loading()?,
        fixed_point_identities(seed)?,
        toeplitz_closed_forms()?,
        power_constraint(seed)?,
        large_system_limits(seed)?,
        deterministic_equivalent(&spec.base)?,
        precoder_ordering(seed, spec.base.trials)?,
        ber_floor(seed)?,
    ];
    Ok(VerifyReport { checks })
}
