//! Expands an experiment into sweep points and evaluates them.

use qmimo_core::asymptotics::{
    asymptotic_siqnr, optimal_beta_closed_form, optimal_beta_numeric, sum_rate_per_antenna, AsymptoticSolution,
    Scenario,
};
use qmimo_core::montecarlo::{
    simulate_ber, simulate_siqnr, MonteCarloReport, RhoPolicy, SystemConfig, MRC_REFERENCE_RHO, ZF_REFERENCE_RHO,
};
use qmimo_core::precoding::optimal_rho;
use qmimo_core::quant::Resolution;
use qmimo_core::units::linear_to_db;
use rayon::prelude::*;

use crate::error::CliError;
use crate::output::{Cell, Table};
use crate::spec::{policy_from, policy_label, AxisValue, ExperimentSpec, Kind, Variable};

/// One fully resolved sweep point.
#[derive(Debug, Clone)]
pub struct Point {
    pub config: SystemConfig,
    /// Exact loading; `config.n_users` is its rounding for simulations.
    pub beta: f64,
    /// Values of the series axes, in declaration order.
    pub labels: Vec<AxisValue>,
}

impl Point {
    fn from_base(base: &SystemConfig) -> Self {
        Self {
            config: base.clone(),
            beta: base.n_users as f64 / base.n_antennas as f64,
            labels: Vec::new(),
        }
    }

    fn set(&mut self, var: Variable, value: &AxisValue) -> Result<(), CliError> {
        let num = || match value {
            AxisValue::Number(x) => Ok(*x),
            AxisValue::Text(t) => Err(CliError::config(format!(
                "`{}` expects a number, got `{t}`",
                var.name()
            ))),
        };
        let c = &mut self.config;
        match var {
            Variable::Rho => c.precoder = RhoPolicy::Fixed(num()?),
            Variable::Beta => {
                self.beta = num()?;
                c.n_users = users_for(self.beta, c.n_antennas);
            }
            Variable::Gamma0Db => c.gamma0_db = num()?,
            Variable::Nu => c.nu = num()?,
            Variable::Eta => c.eta = num()?,
            Variable::BDa => c.b_da = resolution(value)?,
            Variable::BAd => c.b_ad = resolution(value)?,
            Variable::NUsers => {
                c.n_users = count(num()?, var)?;
                self.beta = c.n_users as f64 / c.n_antennas as f64;
            }
            Variable::NAntennas => {
                c.n_antennas = count(num()?, var)?;
                c.n_users = users_for(self.beta, c.n_antennas);
            }
            Variable::Precoder => c.precoder = policy_from(value)?,
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let s = Scenario {
            beta: self.beta,
            ..self.config.scenario()?
        };
        s.validate()?;
        Ok(s)
    }

    /// Regularization applied by the point's policy (ZF and MRC map to the
    /// reference limits).
    pub fn rho(&self) -> Result<f64, CliError> {
        let s = self.scenario()?;
        Ok(match self.config.precoder {
            RhoPolicy::Optimal => optimal_rho(s.beta, s.gamma0, s.rho_da)?,
            RhoPolicy::Conventional => s.beta / s.gamma0,
            RhoPolicy::Fixed(r) => r,
            RhoPolicy::Zf => ZF_REFERENCE_RHO,
            RhoPolicy::Mrc => MRC_REFERENCE_RHO,
        })
    }

    pub fn solution(&self) -> Result<AsymptoticSolution, CliError> {
        Ok(asymptotic_siqnr(&self.scenario()?.at_rho(self.rho()?))?)
    }
}

fn users_for(beta: f64, n: usize) -> usize {
    ((beta * n as f64).round() as usize).max(1)
}

fn count(x: f64, var: Variable) -> Result<usize, CliError> {
    if x >= 1.0 && x.fract() == 0.0 {
        Ok(x as usize)
    } else {
        Err(CliError::config(format!(
            "`{}` must be a positive integer, got {x}",
            var.name()
        )))
    }
}

fn resolution(value: &AxisValue) -> Result<Resolution, CliError> {
    match value {
        AxisValue::Number(x) if *x >= 1.0 && x.fract() == 0.0 => Ok(Resolution::Bits(*x as u32)),
        AxisValue::Number(x) => Err(CliError::config(format!(
            "bit depth must be a positive integer, got {x}"
        ))),
        AxisValue::Text(t) => t
            .parse()
            .map_err(|e: qmimo_core::Error| CliError::config(e.to_string())),
    }
}

/// Curves (series combinations), each a list of sweep points.
pub fn expand(spec: &ExperimentSpec) -> Result<Vec<Vec<Point>>, CliError> {
    let mut curves = vec![Point::from_base(&spec.base)];
    for axis in &spec.series {
        let values = axis.points()?;
        let mut next = Vec::with_capacity(curves.len() * values.len());
        for p in &curves {
            for v in &values {
                let mut q = p.clone();
                q.set(axis.variable, v)?;
                q.labels.push(v.clone());
                next.push(q);
            }
        }
        curves = next;
    }
    let sweep = spec.sweep.as_ref().ok_or_else(|| CliError::config("missing [sweep]"))?;
    let values = sweep.points()?;
    curves
        .into_iter()
        .map(|c| {
            values
                .iter()
                .map(|v| {
                    let mut p = c.clone();
                    p.set(sweep.variable, v)?;
                    p.config.validate().map_err(|e| CliError::config(e.to_string()))?;
                    p.scenario()?;
                    Ok(p)
                })
                .collect()
        })
        .collect()
}

fn scenario_columns(spec: &ExperimentSpec) -> Vec<String> {
    let mut cols: Vec<String> = spec
        .series
        .iter()
        .map(|a| format!("series_{}", a.variable.name()))
        .collect();
    cols.extend(
        [
            "n_antennas",
            "n_users",
            "beta",
            "gamma0_db",
            "gamma0",
            "b_da",
            "b_ad",
            "rho_da",
            "rho_ad",
            "nu",
            "eta",
            "precoder",
        ]
        .map(String::from),
    );
    cols
}

fn scenario_cells(p: &Point) -> Result<Vec<Cell>, CliError> {
    let s = p.scenario()?;
    let c = &p.config;
    let mut cells: Vec<Cell> = p.labels.iter().map(|l| Cell::Text(l.to_string())).collect();
    cells.extend([
        Cell::Int(c.n_antennas as u64),
        Cell::Int(c.n_users as u64),
        Cell::Float(s.beta),
        Cell::Float(c.gamma0_db),
        Cell::Float(s.gamma0),
        Cell::Text(c.b_da.to_string()),
        Cell::Text(c.b_ad.to_string()),
        Cell::Float(s.rho_da),
        Cell::Float(s.rho_ad),
        Cell::Float(s.nu),
        Cell::Float(s.eta),
        Cell::Text(policy_label(c.precoder)),
    ]);
    Ok(cells)
}

const MC_COLUMNS: [&str; 6] = [
    "mc_trials",
    "mc_mean_siqnr",
    "mc_siqnr_std_err",
    "mc_mean_rate",
    "mc_rate_std_err",
    "mc_relative_gap",
];

fn mc_cells(r: &MonteCarloReport) -> Vec<Cell> {
    vec![
        Cell::Int(r.trials as u64),
        Cell::Float(r.mean_siqnr),
        Cell::Float(r.siqnr_std_err),
        Cell::Float(r.mean_rate),
        Cell::Float(r.rate_std_err),
        Cell::Float(r.relative_gap),
    ]
}

fn evaluate<F>(curves: &[Vec<Point>], f: F) -> Result<Vec<Vec<Vec<Cell>>>, CliError>
where
    F: Fn(&Point) -> Result<Vec<Cell>, CliError> + Sync,
{
    let flat: Vec<(usize, &Point)> = curves
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.iter().map(move |p| (i, p)))
        .collect();
    let rows: Vec<(usize, Vec<Cell>)> = flat
        .par_iter()
        .map(|&(i, p)| {
            let mut row = scenario_cells(p)?;
            row.extend(f(p)?);
            Ok((i, row))
        })
        .collect::<Result<_, CliError>>()?;
    let mut out = vec![Vec::new(); curves.len()];
    for (i, row) in rows {
        out[i].push(row);
    }
    Ok(out)
}

fn rho_star(p: &Point) -> Result<f64, CliError> {
    let s = p.scenario()?;
    Ok(optimal_rho(s.beta, s.gamma0, s.rho_da)?)
}

fn sweep_rho(spec: &ExperimentSpec) -> Result<Table, CliError> {
    let curves = expand(spec)?;
    let mut columns = scenario_columns(spec);
    let base = columns.len();
    columns.extend(
        [
            "rho",
            "rho_star",
            "rho_argmax",
            "xi",
            "e12",
            "e22",
            "gamma",
            "gamma_db",
            "rate",
        ]
        .map(String::from),
    );
    if spec.monte_carlo {
        columns.extend(MC_COLUMNS.map(String::from));
    }
    let mut grouped = evaluate(&curves, |p| {
        let sol = p.solution()?;
        let mut cells = vec![
            Cell::Float(p.rho()?),
            Cell::Float(rho_star(p)?),
            Cell::Empty,
            Cell::Float(sol.xi),
            Cell::Float(sol.e12),
            Cell::Float(sol.e22),
            Cell::Float(sol.gamma),
            Cell::Float(linear_to_db(sol.gamma)),
            Cell::Float(sol.rate),
        ];
        if spec.monte_carlo {
            cells.extend(mc_cells(&simulate_siqnr(&p.config)?));
        }
        Ok(cells)
    })?;
    // the curve's grid argmax goes on every row of the curve
    let gamma_col = base + 6;
    for rows in &mut grouped {
        let gammas: Vec<f64> = rows.iter().map(|r| r[gamma_col].as_f64()).collect();
        if let Some(i) = qmimo_core::optimize::argmax(&gammas) {
            let best = rows[i][base].clone();
            for r in rows.iter_mut() {
                r[base + 2] = best.clone();
            }
        }
    }
    Ok(Table::new(columns, grouped.into_iter().flatten().collect()))
}

fn loading_cells(p: &Point) -> Result<Vec<Cell>, CliError> {
    let s = p.scenario()?;
    let numeric = optimal_beta_numeric(&s)?;
    let closed = optimal_beta_closed_form(s.gamma0, s.rho_da, s.rho_ad, s.eta);
    let closed_rate = if closed > 0.0 {
        Cell::Float(sum_rate_per_antenna(&s.with_beta(closed))?)
    } else {
        Cell::Empty
    };
    Ok(vec![
        Cell::Float(numeric.beta),
        Cell::Float(numeric.sum_rate_per_antenna),
        Cell::Float(closed),
        closed_rate,
    ])
}

const LOADING_COLUMNS: [&str; 4] = [
    "beta_star_numeric",
    "r_bar_numeric",
    "beta_star_closed_form",
    "r_bar_closed_form",
];

fn sweep_beta(spec: &ExperimentSpec) -> Result<Table, CliError> {
    let curves = expand(spec)?;
    let mut columns = scenario_columns(spec);
    columns.extend(["rho", "rho_star", "xi", "gamma", "rate", "sum_rate_per_antenna"].map(String::from));
    columns.extend(LOADING_COLUMNS.map(String::from));
    if spec.monte_carlo {
        columns.extend(MC_COLUMNS.map(String::from));
        columns.push("mc_sum_rate_per_antenna".into());
    }
    let grouped = evaluate(&curves, |p| {
        let sol = p.solution()?;
        let s = p.scenario()?;
        let mut cells = vec![
            Cell::Float(p.rho()?),
            Cell::Float(rho_star(p)?),
            Cell::Float(sol.xi),
            Cell::Float(sol.gamma),
            Cell::Float(sol.rate),
            Cell::Float(sol.sum_rate_per_antenna),
        ];
        cells.extend(loading_cells(p)?);
        if spec.monte_carlo {
            let r = simulate_siqnr(&p.config)?;
            let beta = p.config.beta();
            cells.extend(mc_cells(&r));
            cells.push(Cell::Float(beta * (1.0 - s.eta * beta) * r.mean_rate));
        }
        Ok(cells)
    })?;
    Ok(Table::new(columns, grouped.into_iter().flatten().collect()))
}

fn rate_vs_snr(spec: &ExperimentSpec) -> Result<Table, CliError> {
    let curves = expand(spec)?;
    let mut columns = scenario_columns(spec);
    columns.extend(
        [
            "rho",
            "rho_star",
            "xi",
            "gamma",
            "gamma_db",
            "rate",
            "sum_rate_per_antenna",
        ]
        .map(String::from),
    );
    columns.extend(LOADING_COLUMNS.map(String::from));
    if spec.monte_carlo {
        columns.extend(MC_COLUMNS.map(String::from));
    }
    let grouped = evaluate(&curves, |p| {
        let sol = p.solution()?;
        let mut cells = vec![
            Cell::Float(p.rho()?),
            Cell::Float(rho_star(p)?),
            Cell::Float(sol.xi),
            Cell::Float(sol.gamma),
            Cell::Float(linear_to_db(sol.gamma)),
            Cell::Float(sol.rate),
            Cell::Float(sol.sum_rate_per_antenna),
        ];
        cells.extend(loading_cells(p)?);
        if spec.monte_carlo {
            cells.extend(mc_cells(&simulate_siqnr(&p.config)?));
        }
        Ok(cells)
    })?;
    Ok(Table::new(columns, grouped.into_iter().flatten().collect()))
}

fn ber_vs_snr(spec: &ExperimentSpec) -> Result<Table, CliError> {
    let curves = expand(spec)?;
    let mut columns = scenario_columns(spec);
    columns.extend(
        [
            "rho",
            "gamma",
            "backend",
            "n_symbols",
            "ber",
            "ber_std_err",
            "bit_errors",
            "bits",
            "mc_trials",
            "mc_mean_siqnr",
            "mc_siqnr_std_err",
            "mc_mean_rate",
        ]
        .map(String::from),
    );
    let grouped = evaluate(&curves, |p| {
        let r = simulate_ber(&p.config, spec.n_symbols, spec.backend)?;
        let ber = r.ber.expect("BER run reports a BER");
        Ok(vec![
            Cell::Float(p.rho()?),
            Cell::Float(r.asymptotic_reference.gamma),
            Cell::Text(format!("{:?}", spec.backend).to_lowercase()),
            Cell::Int(spec.n_symbols as u64),
            Cell::Float(ber.ber),
            Cell::Float(ber.std_err),
            Cell::Int(ber.bit_errors),
            Cell::Int(ber.bits),
            Cell::Int(r.trials as u64),
            Cell::Float(r.mean_siqnr),
            Cell::Float(r.siqnr_std_err),
            Cell::Float(r.mean_rate),
        ])
    })?;
    Ok(Table::new(columns, grouped.into_iter().flatten().collect()))
}

/// Optimal-loading lookup table over the full grid.
pub fn beta_table(spec: &ExperimentSpec) -> Result<Table, CliError> {
    let grid = spec
        .table
        .as_ref()
        .ok_or_else(|| CliError::config("beta-table needs a [table] grid"))?;
    let mut inputs = Vec::new();
    for &db in &grid.gamma0_db {
        for &b_da in &grid.b_da {
            for &b_ad in &grid.b_ad {
                for &eta in &grid.eta {
                    for &nu in &grid.nu {
                        inputs.push((db, b_da, b_ad, eta, nu));
                    }
                }
            }
        }
    }
    let columns = [
        "gamma0_db",
        "gamma0",
        "b_da",
        "b_ad",
        "rho_da",
        "rho_ad",
        "eta",
        "nu",
        "beta_star_numeric",
        "r_bar_numeric",
        "rho_star_at_beta_star",
        "beta_star_closed_form",
        "r_bar_closed_form",
    ]
    .map(String::from)
    .to_vec();
    let rows = inputs
        .par_iter()
        .map(|&(db, b_da, b_ad, eta, nu)| {
            let config = SystemConfig {
                gamma0_db: db,
                b_da,
                b_ad,
                eta,
                nu,
                ..spec.base.clone()
            };
            let p = Point {
                beta: 0.5,
                labels: Vec::new(),
                config,
            };
            let s = p.scenario()?;
            let loading = loading_cells(&p)?;
            let beta_star = loading[0].as_f64();
            let mut row = vec![
                Cell::Float(db),
                Cell::Float(s.gamma0),
                Cell::Text(b_da.to_string()),
                Cell::Text(b_ad.to_string()),
                Cell::Float(s.rho_da),
                Cell::Float(s.rho_ad),
                Cell::Float(eta),
                Cell::Float(nu),
                loading[0].clone(),
                loading[1].clone(),
                Cell::Float(optimal_rho(beta_star, s.gamma0, s.rho_da)?),
            ];
            row.extend(loading[2..].iter().cloned());
            Ok(row)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(Table::new(columns, rows))
}

/// Evaluate a sweep experiment. `verify` is handled separately.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Table, CliError> {
    spec.validate()?;
    match spec.kind {
        Kind::SweepRho => sweep_rho(spec),
        Kind::SweepBeta => sweep_beta(spec),
        Kind::RateVsSnr => rate_vs_snr(spec),
        Kind::BerVsSnr => ber_vs_snr(spec),
        Kind::BetaTable => beta_table(spec),
        Kind::Verify => Err(CliError::config("verify is not a sweep")),
    }
}
