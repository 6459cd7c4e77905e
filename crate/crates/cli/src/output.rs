//! CSV tables and JSON run summaries.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    U(u64),
    B(bool),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::U(v.into())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => format_f64(*v),
            Cell::U(v) => v.to_string(),
            Cell::B(v) => v.to_string(),
            Cell::S(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::S(s) => s.clone(),
        }
    }
}

#[macro_export]
macro_rules! row {
    ($($v:expr),* $(,)?) => {
        vec![$($crate::output::Cell::from($v)),*]
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(Cell::render).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }
}

/// What a runner hands back besides its table.
#[derive(Debug, Default)]
pub struct Findings {
    pub fitted: Map<String, Value>,
    pub tolerances: Map<String, Value>,
    pub validity: Map<String, Value>,
    pub notes: Vec<String>,
}

impl Findings {
    pub fn fitted(&mut self, k: &str, v: impl Into<Value>) {
        self.fitted.insert(k.into(), v.into());
    }

    pub fn tolerance(&mut self, k: &str, v: f64) {
        self.tolerances.insert(k.into(), v.into());
    }

    pub fn flag(&mut self, k: &str, ok: bool) {
        self.validity.insert(k.into(), ok.into());
    }

    pub fn all_valid(&self) -> bool {
        self.validity.values().all(|v| v.as_bool().unwrap_or(true))
    }
}

pub struct Summary<'a> {
    pub experiment: &'a str,
    pub seed: u64,
    pub config: &'a std::collections::BTreeMap<String, String>,
    pub rows: usize,
    pub findings: &'a Findings,
}

impl Summary<'_> {
    pub fn to_json(&self) -> String {
        let f = self.findings;
        let v = json!({
            "experiment": self.experiment,
            "seed": self.seed,
            "versions": {
                "schro-cli": env!("CARGO_PKG_VERSION"),
                "schro-core": schro_core::VERSION,
            },
            "config": self.config,
            "rows": self.rows,
            "fitted": f.fitted,
            "tolerances": f.tolerances,
            "validity": f.validity,
            "valid": f.all_valid(),
            "notes": f.notes,
        });
        let mut s = serde_json::to_string_pretty(&v).expect("summary serialises");
        s.push('\n');
        s
    }
}

/// `results.csv` becomes `results.summary.json`.
pub fn summary_path(csv: &Path) -> PathBuf {
    csv.with_extension("summary.json")
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CliError::Unwritable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
