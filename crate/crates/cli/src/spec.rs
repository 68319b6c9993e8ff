//! Experiment descriptions loaded from TOML.

use std::fmt;
use std::path::Path;

use qmimo_core::montecarlo::{Backend, RhoPolicy, SystemConfig};
use qmimo_core::quant::Resolution;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    SweepRho,
    SweepBeta,
    RateVsSnr,
    BerVsSnr,
    BetaTable,
    Verify,
}

impl Kind {
    pub fn subcommand(self) -> &'static str {
        match self {
            Kind::SweepRho => "sweep-rho",
            Kind::SweepBeta => "sweep-beta",
            Kind::RateVsSnr => "rate-vs-snr",
            Kind::BerVsSnr => "ber-vs-snr",
            Kind::BetaTable => "beta-table",
            Kind::Verify => "verify",
        }
    }

    /// Variable swept along the row axis.
    pub fn sweep_variable(self) -> Option<Variable> {
        match self {
            Kind::SweepRho => Some(Variable::Rho),
            Kind::SweepBeta => Some(Variable::Beta),
            Kind::RateVsSnr | Kind::BerVsSnr => Some(Variable::Gamma0Db),
            Kind::BetaTable | Kind::Verify => None,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.subcommand())
    }
}

/// A field of [`SystemConfig`] (or the normalized loading / regularization)
/// that an axis may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Rho,
    Beta,
    Gamma0Db,
    Nu,
    BDa,
    BAd,
    Eta,
    NUsers,
    NAntennas,
    Precoder,
}

impl Variable {
    pub fn name(self) -> &'static str {
        match self {
            Variable::Rho => "rho",
            Variable::Beta => "beta",
            Variable::Gamma0Db => "gamma0_db",
            Variable::Nu => "nu",
            Variable::BDa => "b_da",
            Variable::BAd => "b_ad",
            Variable::Eta => "eta",
            Variable::NUsers => "n_users",
            Variable::NAntennas => "n_antennas",
            Variable::Precoder => "precoder",
        }
    }
}

/// One value on an axis: a number, or text such as `"inf"` or `"zf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValue {
    Number(f64),
    Text(String),
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Number(x) => write!(f, "{x}"),
            AxisValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub scale: Scale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub variable: Variable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<AxisValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<Range>,
}

impl Axis {
    pub fn points(&self) -> Result<Vec<AxisValue>, CliError> {
        let name = self.variable.name();
        let pts = match (&self.values, &self.range) {
            (Some(v), None) => v.clone(),
            (None, Some(r)) => {
                if r.points == 0 {
                    return Err(CliError::config(format!(
                        "axis `{name}`: range needs at least one point"
                    )));
                }
                let xs = match r.scale {
                    Scale::Linear => qmimo_core::optimize::lin_space(r.start, r.stop, r.points),
                    Scale::Log => {
                        if !(r.start > 0.0 && r.stop > 0.0) {
                            return Err(CliError::config(format!(
                                "axis `{name}`: log range needs positive ends"
                            )));
                        }
                        qmimo_core::optimize::log_space(r.start, r.stop, r.points)
                    }
                };
                xs.into_iter().map(AxisValue::Number).collect()
            }
            _ => {
                return Err(CliError::config(format!(
                    "axis `{name}`: give exactly one of `values` or `range`"
                )))
            }
        };
        if pts.is_empty() {
            return Err(CliError::config(format!("axis `{name}` is empty")));
        }
        Ok(pts)
    }
}

/// Grid for the optimal-loading lookup table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableGrid {
    pub gamma0_db: Vec<f64>,
    pub b_da: Vec<Resolution>,
    pub b_ad: Vec<Resolution>,
    #[serde(default = "one")]
    pub eta: Vec<f64>,
    #[serde(default = "zero")]
    pub nu: Vec<f64>,
}

fn one() -> Vec<f64> {
    vec![1.0]
}

fn zero() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub kind: Kind,
    #[serde(default)]
    pub description: String,
    pub base: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Axis>,
    /// Extra axes; every combination becomes a separate curve.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<Axis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableGrid>,
    /// Add Monte-Carlo columns to asymptotic sweeps.
    #[serde(default)]
    pub monte_carlo: bool,
    /// Data symbols per user and realization for BER runs.
    #[serde(default = "default_symbols")]
    pub n_symbols: usize,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    /// Replacement distortion table for `verify` (negative controls).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion_table: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// Reduced-effort defaults; `--full` raises them to publication quality.
pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_SYMBOLS: usize = 10_000;
pub const FULL_TRIALS: usize = 500;
pub const FULL_SYMBOLS: usize = 100_000;

fn default_symbols() -> usize {
    DEFAULT_SYMBOLS
}

fn default_backend() -> Backend {
    Backend::Hard
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub full: bool,
    pub out: Option<String>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let spec: Self = toml::from_str(text).map_err(|e| CliError::config(format!("invalid experiment file: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Default experiment used when `verify` runs without a file.
    pub fn default_verify() -> Self {
        Self {
            name: "verify".into(),
            kind: Kind::Verify,
            description: String::new(),
            base: SystemConfig {
                nu: 0.5,
                trials: DEFAULT_TRIALS,
                seed: 1,
                ..SystemConfig::new(256, 64, 15.0)
            },
            sweep: None,
            series: Vec::new(),
            table: None,
            monte_carlo: false,
            n_symbols: DEFAULT_SYMBOLS,
            backend: Backend::Hard,
            distortion_table: None,
            output: None,
        }
    }

    /// Apply command-line overrides: file < `--full` < explicit flags.
    pub fn apply(&mut self, o: &Overrides) {
        if o.full {
            self.base.trials = self.base.trials.max(FULL_TRIALS);
            self.n_symbols = self.n_symbols.max(FULL_SYMBOLS);
        }
        if let Some(seed) = o.seed {
            self.base.seed = seed;
        }
        if let Some(t) = o.trials {
            self.base.trials = t;
        }
        if let Some(out) = &o.out {
            self.output = Some(out.clone());
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.name.trim().is_empty() {
            return Err(CliError::config("experiment needs a name"));
        }
        if self.base.trials == 0 {
            return Err(CliError::config("base.trials must be at least 1"));
        }
        match (self.kind.sweep_variable(), &self.sweep) {
            (Some(var), Some(axis)) if axis.variable != var => {
                return Err(CliError::config(format!(
                    "{} sweeps `{}`, not `{}`",
                    self.kind,
                    var.name(),
                    axis.variable.name()
                )))
            }
            (Some(var), None) => {
                return Err(CliError::config(format!(
                    "{} needs a [sweep] over `{}`",
                    self.kind,
                    var.name()
                )))
            }
            (None, Some(_)) => return Err(CliError::config(format!("{} takes no [sweep]", self.kind))),
            _ => {}
        }
        if let Some(axis) = &self.sweep {
            axis.points()?;
        }
        for axis in &self.series {
            axis.points()?;
            if Some(axis.variable) == self.kind.sweep_variable() {
                return Err(CliError::config(format!(
                    "series axis repeats the sweep variable `{}`",
                    axis.variable.name()
                )));
            }
        }
        if self.kind == Kind::BetaTable {
            let t = self
                .table
                .as_ref()
                .ok_or_else(|| CliError::config("beta-table needs a [table] grid"))?;
            if t.gamma0_db.is_empty() || t.b_da.is_empty() || t.b_ad.is_empty() || t.eta.is_empty() || t.nu.is_empty() {
                return Err(CliError::config("every [table] list must be nonempty"));
            }
        }
        if self.kind == Kind::BerVsSnr && self.n_symbols == 0 {
            return Err(CliError::config("n_symbols must be at least 1"));
        }
        if let Some(t) = &self.distortion_table {
            if t.len() != 5 {
                return Err(CliError::config("distortion_table needs five entries (1 to 5 bits)"));
            }
        }
        Ok(())
    }
}

/// Parse a precoder policy from an axis value.
pub fn policy_from(value: &AxisValue) -> Result<RhoPolicy, CliError> {
    match value {
        AxisValue::Number(r) => Ok(RhoPolicy::Fixed(*r)),
        AxisValue::Text(t) => match t.as_str() {
            "optimal" => Ok(RhoPolicy::Optimal),
            "conventional" => Ok(RhoPolicy::Conventional),
            "zf" => Ok(RhoPolicy::Zf),
            "mrc" => Ok(RhoPolicy::Mrc),
            other => Err(CliError::config(format!("unknown precoder `{other}`"))),
        },
    }
}

pub fn policy_label(p: RhoPolicy) -> String {
    match p {
        RhoPolicy::Optimal => "optimal".into(),
        RhoPolicy::Conventional => "conventional".into(),
        RhoPolicy::Zf => "zf".into(),
        RhoPolicy::Mrc => "mrc".into(),
        RhoPolicy::Fixed(_) => "fixed".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
kind = "sweep_rho"
[base]
n_antennas = 64
n_users = 32
gamma0_db = 15.0
b_da = 1
b_ad = "inf"
precoder = "optimal"
trials = 10
[sweep]
variable = "rho"
range = { start = 0.01, stop = 10.0, points = 5, scale = "log" }
[[series]]
variable = "nu"
values = [0.2, 0.5]
"#;

    #[test]
    fn parses_minimal_file() {
        let s = ExperimentSpec::from_toml(MINIMAL).unwrap();
        assert_eq!(s.base.b_ad, Resolution::Infinite);
        assert_eq!(s.sweep.unwrap().points().unwrap().len(), 5);
        assert_eq!(s.base.eta, 1.0);
    }

    #[test]
    fn rejects_wrong_sweep_variable() {
        let bad = MINIMAL.replace("variable = \"rho\"", "variable = \"beta\"");
        assert!(ExperimentSpec::from_toml(&bad).is_err());
        let bad = MINIMAL.replace("variable = \"nu\"", "variable = \"colour\"");
        assert!(ExperimentSpec::from_toml(&bad).is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut s = ExperimentSpec::from_toml(MINIMAL).unwrap();
        s.apply(&Overrides {
            full: true,
            trials: Some(3),
            seed: Some(9),
            out: None,
        });
        assert_eq!((s.base.trials, s.base.seed, s.n_symbols), (3, 9, FULL_SYMBOLS));
    }

    #[test]
    fn policies() {
        assert_eq!(policy_from(&AxisValue::Text("zf".into())).unwrap(), RhoPolicy::Zf);
        assert_eq!(policy_from(&AxisValue::Number(0.3)).unwrap(), RhoPolicy::Fixed(0.3));
        assert!(policy_from(&AxisValue::Text("dpc".into())).is_err());
    }
}
