//! CSV and JSON report formats.
//!
//! CSV files are comma separated with a header row and LF line endings.
//! Floats are written with 17 significant digits in scientific notation,
//! which round-trips every `f64`. Time indices are 1-based.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// A cell of a CSV row.
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(&'static str),
    Empty,
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(if v { "true" } else { "false" })
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

/// In-memory CSV table.
pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Csv {
            text,
            width: header.len(),
        }
    }

    /// Header `fixed..., prefix1, ..., prefixK, trailing...`.
    pub fn with_columns(header: Vec<String>) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Csv {
            text,
            width: header.len(),
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        assert_eq!(
            cells.len(),
            self.width,
            "row width does not match the header"
        );
        for (k, c) in cells.into_iter().enumerate() {
            if k > 0 {
                self.text.push(',');
            }
            match c {
                Cell::Int(v) => write!(self.text, "{v}").unwrap(),
                Cell::Float(v) => self.text.push_str(&format_float(v)),
                Cell::Text(s) => self.text.push_str(s),
                Cell::Empty => {}
            }
        }
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// One named assertion. `margin ≥ 0` iff it passed, when a margin exists.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub margin: Option<f64>,
    pub parameters: Value,
}

impl Check {
    pub fn new(name: &str, margin: f64, parameters: Value) -> Self {
        Check {
            name: name.into(),
            pass: margin >= 0.0,
            margin: margin.is_finite().then_some(margin),
            parameters,
        }
    }

    pub fn flag(name: &str, pass: bool, parameters: Value) -> Self {
        Check {
            name: name.into(),
            pass,
            margin: None,
            parameters,
        }
    }
}

/// Everything a single seed produced.
#[derive(Debug, Clone, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub file: String,
    pub checks: Vec<Check>,
    pub stats: Value,
    #[serde(skip)]
    pub csv: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub command: &'static str,
    pub pass: bool,
    /// Per-seed checks folded by name, plus checks across seeds.
    pub checks: Vec<Check>,
    pub config: Value,
    pub runs: Vec<SeedRun>,
}

/// Folds per-seed checks of the same name: passes iff all pass, with the
/// smallest margin.
pub fn fold_checks(runs: &[SeedRun]) -> Vec<Check> {
    let mut out: Vec<Check> = Vec::new();
    for run in runs {
        for c in &run.checks {
            match out.iter_mut().find(|o| o.name == c.name) {
                Some(o) => {
                    o.pass &= c.pass;
                    o.margin = match (o.margin, c.margin) {
                        (Some(a), Some(b)) => Some(a.min(b)),
                        (a, b) => a.or(b),
                    };
                }
                None => out.push(Check {
                    name: c.name.clone(),
                    pass: c.pass,
                    margin: c.margin,
                    parameters: c.parameters.clone(),
                }),
            }
        }
    }
    out
}

pub fn write_outputs(dir: &Path, summary: &Summary) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    for run in &summary.runs {
        write_file(&dir.join(&run.file), &run.csv)?;
    }
    let mut json = serde_json::to_string_pretty(summary).expect("summary serializes");
    json.push('\n');
    write_file(&dir.join("summary.json"), &json)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}
