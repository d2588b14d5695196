use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

/// Version carried in the first CSV column.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or arguments (exit 2).
    Input(String),
    /// Computation finished but a diagnostic rejected it (exit 1).
    Diagnostic(String),
}

impl From<stokes_shape::Error> for Failure {
    fn from(e: stokes_shape::Error) -> Self {
        match e {
            stokes_shape::Error::Fit(_) | stokes_shape::Error::Convergence(_) | stokes_shape::Error::Accuracy { .. } => {
                Failure::Diagnostic(e.to_string())
            }
            _ => Failure::Input(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when value ≤ tol.
    pub fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self { name: name.into(), value, tol, passed: value.is_finite() && value <= tol }
    }

    /// Passes when value ≥ tol.
    pub fn at_least(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self { name: name.into(), value, tol, passed: value.is_finite() && value >= tol }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub suffix: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { suffix: "", header: header.to_vec(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Shortest round-trip text; exponent form outside [1e−4, 1e15).
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub summary: serde_json::Value,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn write(&self, dir: &Path, name: &str) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for t in &self.tables {
            let path = dir.join(format!("{name}{}.csv", t.suffix));
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
            let mut head = vec!["schema_version"];
            head.extend(t.header.iter().copied());
            w.write_record(&head)?;
            for r in &t.rows {
                let mut rec = vec![SCHEMA_VERSION.to_string()];
                rec.extend(r.iter().cloned());
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        let doc = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "subcommand": name,
            "checks": self.checks,
            "summary": self.summary,
        });
        let mut text = serde_json::to_string_pretty(&doc).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(dir.join(format!("{name}.json")), text)
    }
}
