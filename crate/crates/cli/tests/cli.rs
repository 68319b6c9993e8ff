use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn qmimo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmimo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = qmimo(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn rows(path: &Path) -> Vec<HashMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            header
                .iter()
                .map(String::from)
                .zip(rec.unwrap().iter().map(String::from))
                .collect()
        })
        .collect()
}

fn num(row: &HashMap<String, String>, col: &str) -> f64 {
    row[col].parse().unwrap_or_else(|_| panic!("{col} = {:?}", row[col]))
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

const BASE: &str = r#"
[base]
n_antennas = 64
n_users = 16
gamma0_db = 5.0
b_da = 1
b_ad = 3
nu = 0.5
precoder = "optimal"
trials = 4
seed = 1
"#;

#[test]
fn rho_sweep_argmax_ignores_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rho.csv");
    let cfg = configs().join("siqnr_vs_rho_correlation.toml");
    run_ok(&[
        "sweep-rho",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let rows = rows(&out);
    assert_eq!(rows.len(), 600);
    let step = (10.0f64 / 0.01).ln() / 199.0;
    for nu in ["0.2", "0.5", "0.8"] {
        let r = rows.iter().find(|r| r["series_nu"] == nu).unwrap();
        assert!(
            (num(r, "rho_argmax").ln() - 0.3103f64.ln()).abs() <= step,
            "{nu}: {}",
            r["rho_argmax"]
        );
        assert!((num(r, "rho_star") - 0.3103).abs() < 5e-4);
    }
    assert!(dir.path().join("rho.csv.meta.json").exists());
}

#[test]
fn beta_sweep_reports_quoted_rho_star() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "name = \"b\"\nkind = \"sweep_beta\"\n{BASE}\n[sweep]\nvariable = \"beta\"\nvalues = [0.25, 0.3125, 0.375, 0.4375]\n"
        ),
    );
    let out = dir.path().join("beta.csv");
    run_ok(&["sweep-beta", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let got: Vec<f64> = rows(&out).iter().map(|r| num(r, "rho_star")).collect();
    for (g, q) in got.iter().zip([0.2669, 0.3336, 0.4003, 0.4671]) {
        assert!((g - q).abs() < 5e-4, "{got:?}");
    }
}

#[test]
fn snr_sweep_reports_quoted_rho_star() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "name = \"s\"\nkind = \"rate_vs_snr\"\n{BASE}\n[sweep]\nvariable = \"gamma0_db\"\nvalues = [5.0, 4.0, 3.0, 2.0]\n"
        ),
    );
    let out = dir.path().join("snr.csv");
    run_ok(&["rate-vs-snr", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let got: Vec<f64> = rows(&out).iter().map(|r| num(r, "rho_star")).collect();
    for (g, q) in got.iter().zip([0.2669, 0.2991, 0.3395, 0.3905]) {
        assert!((g - q).abs() < 5e-4, "{got:?}");
    }
}

#[test]
fn loading_table_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "name = \"t\"\nkind = \"beta_table\"\n{BASE}\n[table]\ngamma0_db = [-15.0, -10.0, -5.0, 0.0, 5.0]\nb_da = [1]\nb_ad = [3]\n"
        ),
    );
    let out = dir.path().join("table.csv");
    run_ok(&["beta-table", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let rows = rows(&out);
    let zero = rows.iter().find(|r| r["gamma0_db"] == "0").unwrap();
    assert_eq!(
        (
            zero["b_da"].as_str(),
            zero["b_ad"].as_str(),
            zero["eta"].as_str(),
            zero["nu"].as_str()
        ),
        ("1", "3", "1", "0")
    );
    assert!((num(zero, "beta_star_numeric") - 0.2409).abs() <= 0.005);
    let betas: Vec<f64> = rows.iter().map(|r| num(r, "beta_star_numeric")).collect();
    assert!(betas.windows(2).all(|w| w[1] > w[0]), "{betas:?}");
}

#[test]
fn monte_carlo_sweep_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "name = \"mc\"\nkind = \"rate_vs_snr\"\nmonte_carlo = true\n{BASE}\n[sweep]\nvariable = \"gamma0_db\"\nvalues = [0.0, 10.0]\n[[series]]\nvariable = \"precoder\"\nvalues = [\"optimal\", \"zf\"]\n"
        ),
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run_ok(&[
        "rate-vs-snr",
        "--config",
        &cfg,
        "--out",
        a.to_str().unwrap(),
        "--trials",
        "6",
        "--seed",
        "9",
    ]);
    run_ok(&[
        "rate-vs-snr",
        "--config",
        &cfg,
        "--out",
        b.to_str().unwrap(),
        "--trials",
        "6",
        "--seed",
        "9",
    ]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let rows = rows(&a);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["mc_trials"] == "6"));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 9);
    assert_eq!(meta["experiment"]["base"]["trials"], 6);
}

#[test]
fn ber_sweep_writes_error_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("name = \"ber\"\nkind = \"ber_vs_snr\"\nn_symbols = 50\n{BASE}\n[sweep]\nvariable = \"gamma0_db\"\nvalues = [0.0, 20.0]\n"),
    );
    let out = dir.path().join("ber.csv");
    run_ok(&["ber-vs-snr", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let rows = rows(&out);
    assert_eq!(rows[0]["bits"], (4 * 50 * 16 * 2).to_string());
    assert!(num(&rows[1], "ber") < num(&rows[0], "ber"));
}

#[test]
fn verify_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    let first = run_ok(&["verify", "--out", a.to_str().unwrap()]);
    run_ok(&["verify", "--out", b.to_str().unwrap()]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let text = String::from_utf8(first.stdout).unwrap();
    assert_eq!(text, std::fs::read_to_string(&a).unwrap());
    assert!(!text.lines().any(|l| l.starts_with("FAIL")), "{text}");
}

#[test]
fn corrupted_distortion_table_fails_verify() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corrupted_distortion_table.toml");
    let out = qmimo(&["verify", "--config", fixture.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("FAIL distortion_table")), "{text}");
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = |body: &str| write_config(dir.path(), body);

    let unknown = cfg(&format!(
        "name = \"x\"\nkind = \"sweep_rho\"\ncolour = 1\n{BASE}\n[sweep]\nvariable = \"rho\"\nvalues = [0.1]\n"
    ));
    assert_eq!(qmimo(&["sweep-rho", "--config", &unknown]).status.code(), Some(2));

    let wrong_axis = cfg(&format!(
        "name = \"x\"\nkind = \"sweep_rho\"\n{BASE}\n[sweep]\nvariable = \"beta\"\nvalues = [0.1]\n"
    ));
    assert_eq!(qmimo(&["sweep-rho", "--config", &wrong_axis]).status.code(), Some(2));

    let ok = cfg(&format!(
        "name = \"x\"\nkind = \"sweep_rho\"\n{BASE}\n[sweep]\nvariable = \"rho\"\nvalues = [0.1]\n"
    ));
    assert_eq!(qmimo(&["sweep-beta", "--config", &ok]).status.code(), Some(2));
    let blocked = dir.path().join("exp.toml").join("out.csv");
    assert_eq!(
        qmimo(&["sweep-rho", "--config", &ok, "--out", blocked.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let overloaded = cfg(&format!(
        "name = \"x\"\nkind = \"sweep_rho\"\n{}\n[sweep]\nvariable = \"rho\"\nvalues = [0.1]\n",
        BASE.replace("n_users = 16", "n_users = 80")
    ));
    assert_eq!(qmimo(&["sweep-rho", "--config", &overloaded]).status.code(), Some(2));

    assert_eq!(qmimo(&["sweep-rho"]).status.code(), Some(2));
    assert_eq!(
        qmimo(&["sweep-rho", "--config", "/nonexistent.toml"]).status.code(),
        Some(2)
    );
}

#[test]
fn every_config_parses() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        qmimo_cli::ExperimentSpec::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
