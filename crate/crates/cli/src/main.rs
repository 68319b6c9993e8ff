use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qmimo_cli::{output, run_experiment, verify, CliError, ExperimentSpec, Kind, Overrides};

#[derive(Parser)]
#[command(name = "qmimo", version, about = "Quantized massive MIMO precoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// SIQNR against the normalized regularization
    SweepRho(Common),
    /// Rates against the user loading
    SweepBeta(Common),
    /// Rates against the SNR
    RateVsSnr(Common),
    /// Monte-Carlo QPSK BER against the SNR
    BerVsSnr(Common),
    /// Lookup table of the optimal user loading
    BetaTable(Common),
    /// Check the invariant suite at pinned seeds
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path; CSV goes to stdout when neither this nor the file sets one
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo channel realizations per point
    #[arg(long)]
    trials: Option<usize>,
    /// Publication-size trial and symbol counts
    #[arg(long)]
    full: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            trials: self.trials,
            full: self.full,
            out: self.out.clone(),
        }
    }
}

fn load(kind: Kind, args: &Common) -> Result<ExperimentSpec, CliError> {
    let mut spec = match (&args.config, kind) {
        (Some(path), _) => ExperimentSpec::load(path)?,
        (None, Kind::Verify) => ExperimentSpec::default_verify(),
        (None, _) => return Err(CliError::config(format!("{kind} needs --config <path>"))),
    };
    if spec.kind != kind {
        return Err(CliError::config(format!(
            "experiment `{}` is a {} run, not {kind}",
            spec.name, spec.kind
        )));
    }
    spec.apply(&args.overrides());
    spec.validate()?;
    Ok(spec)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (kind, args) = match &cli.command {
        Command::SweepRho(a) => (Kind::SweepRho, a),
        Command::SweepBeta(a) => (Kind::SweepBeta, a),
        Command::RateVsSnr(a) => (Kind::RateVsSnr, a),
        Command::BerVsSnr(a) => (Kind::BerVsSnr, a),
        Command::BetaTable(a) => (Kind::BetaTable, a),
        Command::Verify(a) => (Kind::Verify, a),
    };
    let spec = load(kind, args)?;
    let out = spec.output.as_deref().map(Path::new);
    if kind == Kind::Verify {
        let report = verify(&spec)?;
        let text = report.to_string();
        print!("{text}");
        if let Some(path) = out {
            std::fs::write(path, &text)
                .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?;
        }
        return match report.failures() {
            0 => Ok(()),
            n => Err(CliError::Verification(n)),
        };
    }
    let table = run_experiment(&spec)?;
    output::write(&table, &spec, out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qmimo: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
