//! CSV tables and their JSON sidecars.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;
use crate::spec::ExperimentSpec;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    /// Numeric value, NaN for text and empty cells.
    pub fn as_f64(&self) -> f64 {
        match self {
            Cell::Float(x) => *x,
            Cell::Int(n) => *n as f64,
            Cell::Text(_) | Cell::Empty => f64::NAN,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Float(x) => x.to_string(),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<Cell>>) -> Self {
        debug_assert!(rows.iter().all(|r| r.len() == columns.len()));
        Self { columns, rows }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| CliError::config(format!("cannot write CSV: {e}"));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(io)?;
        }
        w.flush()
            .map_err(|e| CliError::config(format!("cannot write CSV: {e}")))
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    name: &'a str,
    kind: String,
    version: &'static str,
    seed: u64,
    rows: usize,
    columns: &'a [String],
    experiment: &'a ExperimentSpec,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Write `table` to `path` (or stdout when `None`) plus a metadata sidecar
/// next to the file. The sidecar carries no timestamps so reruns with the
/// same seed are byte-identical.
pub fn write(table: &Table, spec: &ExperimentSpec, path: Option<&Path>) -> Result<(), CliError> {
    let Some(path) = path else {
        return table.write_csv(std::io::stdout().lock());
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
    }
    let file =
        std::fs::File::create(path).map_err(|e| CliError::config(format!("cannot create {}: {e}", path.display())))?;
    table.write_csv(std::io::BufWriter::new(file))?;

    let meta = Sidecar {
        name: &spec.name,
        kind: spec.kind.to_string(),
        version: env!("CARGO_PKG_VERSION"),
        seed: spec.base.seed,
        rows: table.rows.len(),
        columns: &table.columns,
        experiment: spec,
    };
    let json = serde_json::to_string_pretty(&meta).expect("experiment serializes");
    let meta_path = sidecar_path(path);
    std::fs::write(&meta_path, json + "\n")
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", meta_path.display())))
}
